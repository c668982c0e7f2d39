"""Operator command line: embedding training, model training, batch
segmentation, evaluation, survey ranking, gradient checking, serving, and
feedback export.

Conventions: stdout carries only data, diagnostics go to stderr; exit code
0 on success, 1 on usage or data errors, 2 on internal assertion failures.
All subcommands are deterministic given --seed.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from . import evalkit, neuralnet
from .embedding import (
    EmbeddingIOError,
    SkipGramConfig,
    load_vectors,
    save_vectors,
    train_skipgram,
)
from .segmenter import (
    InferenceConfig,
    ModelConfig,
    ModelIOError,
    SegmenterModel,
    TrainConfig,
    full_stack_fragment,
    load_model,
    save_model,
    train_model,
)
from .server import ServiceSettings, create_app, export_feedback
from .textcore import CorpusError, build_vocabulary, load_corpus

GRADCHECK_THRESHOLDS = {
    "dense": 1e-6,
    "conv_pool": 1e-6,
    "bilstm": 1e-5,
    "full_stack": 1e-4,
}


class CliError(Exception):
    """Usage or data error; rendered to stderr with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep 1 for usage errors
        raise CliError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="segrt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-embeddings", help="train character vectors by skip-gram")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="vector file; buckets go to <out>.sub")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--subsample", type=float, default=1e-4)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--buckets", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-out", default=None, help="also write the vocabulary file")

    p = sub.add_parser("train", help="train the boundary classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.0005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", default=None, help="labeled corpus for per-epoch F1")
    p.add_argument(
        "--holdout-frac",
        type=float,
        default=0.05,
        help="carved from --corpus when --holdout is absent (0 disables)",
    )

    p = sub.add_parser("segment", help="segment lines from a file or stdin")
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--overlap", type=int, default=30)
    p.add_argument("--input", default=None, help="defaults to stdin")

    p = sub.add_parser("eval", help="boundary metrics of predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--format", choices=("kv", "text"), default="kv")

    p = sub.add_parser("rank", help="system-rank report from a survey CSV")
    p.add_argument("--survey", required=True)
    p.add_argument("--format", choices=("kv", "text"), default="text")

    p = sub.add_parser("gradcheck", help="verify analytic gradients per layer kind")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("serve", help="run the HTTP segmentation service")
    p.add_argument("--model", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--overlap", type=int, default=30)
    p.add_argument("--feedback-log", default="feedback.jsonl")

    p = sub.add_parser("export-feedback", help="feedback log -> retraining corpus")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)

    return parser


def _cmd_train_embeddings(args) -> int:
    lines = []
    reader = load_corpus(args.corpus)
    for chars, labels in reader:
        lines.append(chars.text)
    vocab = build_vocabulary(lines, min_count=args.min_count)
    config = SkipGramConfig(
        window=args.window,
        negatives=args.negatives,
        epochs=args.epochs,
        learning_rate=args.lr,
        subsample=args.subsample,
        min_count=args.min_count,
        buckets=args.buckets,
    )
    table = train_skipgram(lines, config, vocab, seed=args.seed)
    save_vectors(table, args.out)
    if args.vocab_out:
        from .textcore import save_vocabulary

        save_vocabulary(vocab, args.vocab_out)
    for epoch, loss in enumerate(table.train_losses, start=1):
        print(f"epoch={epoch} loss={loss:.6f}")
    print(f"chars={len(vocab.char_to_id)} out={args.out}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    table = load_vectors(args.embeddings)
    config = ModelConfig()
    pairs = list(load_corpus(args.corpus, max_chars=None))
    if args.holdout:
        holdout = list(load_corpus(args.holdout))
        train_pairs = pairs
    elif args.holdout_frac > 0 and len(pairs) >= 20:
        rng = np.random.Generator(np.random.PCG64(args.seed))
        order = rng.permutation(len(pairs))
        cut = max(1, min(int(len(pairs) * args.holdout_frac), 2000))
        holdout = [pairs[i] for i in order[:cut]]
        train_pairs = [pairs[i] for i in order[cut:]]
    else:
        holdout = None
        train_pairs = pairs
    model = SegmenterModel(config, table, seed=args.seed)
    tc = TrainConfig(
        epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr, seed=args.seed
    )

    def emit(entry: dict) -> None:
        parts = [f"epoch={entry['epoch']}", f"loss={entry['loss']:.6f}"]
        if "holdout_f1" in entry:
            parts.append(f"holdout_f1={entry['holdout_f1']:.4f}")
        print(" ".join(parts), flush=True)

    report = train_model(model, train_pairs, tc, holdout=holdout, log=emit)
    save_model(model, args.out)
    print(
        f"examples={report.examples} skipped_long={report.skipped_long} out={args.out}",
        file=sys.stderr,
    )
    return 0


def _cmd_segment(args) -> int:
    table = load_vectors(args.embeddings)
    model = load_model(args.model, table)
    cfg = InferenceConfig(
        threshold=args.threshold,
        overlap=min(args.overlap, model.config.l_max - 1),
        l_max=model.config.l_max,
    )
    stream = open(args.input, "r", encoding="utf-8") if args.input else sys.stdin
    try:
        for line in stream:
            print(model.segment(line.rstrip("\n"), cfg))
    finally:
        if args.input:
            stream.close()
    return 0


def _read_label_pairs(pred_path: str, gold_path: str):
    from .textcore import despace

    with open(pred_path, encoding="utf-8") as fp, open(gold_path, encoding="utf-8") as fg:
        pred_lines = fp.read().splitlines()
        gold_lines = fg.read().splitlines()
    if len(pred_lines) != len(gold_lines):
        raise CliError(
            f"line counts differ: {len(pred_lines)} predictions, {len(gold_lines)} gold"
        )
    pairs = []
    for lineno, (pred, gold) in enumerate(zip(pred_lines, gold_lines), start=1):
        pred_chars, pred_labels = despace(pred)
        gold_chars, gold_labels = despace(gold)
        if pred_chars.text != gold_chars.text:
            raise CliError(f"line {lineno}: prediction and gold characters differ")
        pairs.append((list(pred_labels), list(gold_labels)))
    return pairs


def _cmd_eval(args) -> int:
    metrics = evalkit.corpus_metrics(_read_label_pairs(args.pred, args.gold))
    fields = [
        ("precision", metrics.precision),
        ("recall", metrics.recall),
        ("f1", metrics.f1),
        ("word_accuracy", metrics.word_accuracy),
        ("exact_match", metrics.exact_match),
    ]
    if args.format == "kv":
        print(" ".join(f"{k}={v:.4f}" for k, v in fields))
    else:
        for k, v in fields:
            print(f"{k:>14}: {v:.4f}")
    return 0


def _cmd_rank(args) -> int:
    survey = evalkit.load_survey(args.survey)
    report = evalkit.compare_systems(survey)
    if args.format == "kv":
        for row in report:
            print(f"system={row['system']} mean_rank={row['mean_rank']:.4f} s={row['s']:.4f}")
    else:
        print(f"{'system':>12}  {'mean rank':>9}  {'S':>6}")
        for row in report:
            print(f"{row['system']:>12}  {row['mean_rank']:>9.4f}  {row['s']:>6.4f}")
    return 0


def _gradcheck_fragments(seed: int):
    return {
        "dense": neuralnet.dense_relu_fragment(seed),
        "conv_pool": neuralnet.conv_pool_fragment(seed),
        "bilstm": neuralnet.bilstm_fragment(seed),
        "full_stack": full_stack_fragment(seed),
    }


def _cmd_gradcheck(args) -> int:
    ok = True
    print(f"{'layer':>10}  {'max rel err':>12}  {'threshold':>9}  status")
    for name, (loss_fn, params, ties) in _gradcheck_fragments(args.seed).items():
        err = neuralnet.gradient_check(
            loss_fn,
            params,
            rng=np.random.default_rng(args.seed),
            tie_state=ties,
        )
        threshold = GRADCHECK_THRESHOLDS[name]
        passed = err <= threshold
        ok &= passed
        print(f"{name:>10}  {err:>12.3e}  {threshold:>9.0e}  {'pass' if passed else 'FAIL'}")
    return 0 if ok else 1


def _cmd_serve(args) -> int:
    import uvicorn

    settings = ServiceSettings(
        model_path=args.model,
        embeddings_path=args.embeddings,
        port=args.port,
        threshold=args.threshold,
        overlap=args.overlap,
        feedback_log=args.feedback_log,
    ).with_env_overrides()
    app = create_app(settings)
    uvicorn.run(app, host=args.host, port=settings.port, log_level="warning")
    return 0


def _cmd_export_feedback(args) -> int:
    try:
        exported, skipped = export_feedback(args.log, args.out)
    except OSError as exc:
        raise CliError(f"cannot export feedback: {exc}") from exc
    print(f"exported={exported} skipped={skipped}", file=sys.stderr)
    return 0


_HANDLERS = {
    "train-embeddings": _cmd_train_embeddings,
    "train": _cmd_train,
    "segment": _cmd_segment,
    "eval": _cmd_eval,
    "rank": _cmd_rank,
    "gradcheck": _cmd_gradcheck,
    "serve": _cmd_serve,
    "export-feedback": _cmd_export_feedback,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    neuralnet.limit_blas_threads()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, EmbeddingIOError, ModelIOError, evalkit.SurveyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"internal assertion failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

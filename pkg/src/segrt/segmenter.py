"""The boundary classifier: a CNN + BiLSTM encoder over a padded character
matrix feeding an MLP decoder that scores every gap, plus training,
thresholded inference, and overlap-hopping for inputs longer than the
window.

The segmenter only ever inserts spaces: output text with spaces removed is
always exactly the de-spaced input, and spaces the user already typed are
kept (OR of user and model boundaries).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import neuralnet as nn
from .embedding import EmbeddingTable
from .evalkit import corpus_metrics
from .textcore import BoundaryLabels, CharSequence, apply_labels, despace

MODEL_MAGIC = b"SEGM\x01"


class ModelIOError(Exception):
    """A model file is malformed or inconsistent with its config block."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults are the production values."""

    l_max: int = 100
    embed_dim: int = 100
    conv_filters: int = 32
    conv1_kernel: tuple[int, int] = (3, 100)
    conv2_kernel: tuple[int, int] = (3, 1)
    pool: tuple[int, int] = (2, 1)
    conv_layers: int = 2
    lstm_hidden: int = 32
    mlp_hidden: int = 128
    mlp_layers: int = 2
    dropout: float = 0.3

    def __post_init__(self) -> None:
        if min(
            self.l_max,
            self.embed_dim,
            self.conv_filters,
            *self.conv1_kernel,
            *self.conv2_kernel,
            *self.pool,
            self.lstm_hidden,
            self.mlp_hidden,
        ) < 1:
            raise ValueError("all architecture dimensions must be positive")
        if self.conv_layers != 2:
            raise ValueError("the encoder is fixed at two convolution layers")
        if self.mlp_layers != 2:
            raise ValueError("the decoder is fixed at two hidden layers")
        if self.conv1_kernel[1] != self.embed_dim:
            raise ValueError("first convolution must span the embedding width")
        if self.conv2_kernel[1] != 1:
            raise ValueError("second convolution runs along length only")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate outside [0, 1)")
        if self.output_size < 1:
            raise ValueError("l_max too small for any boundary output")
        if self.cnn_flat_size < 1:
            raise ValueError("convolution stack collapses below one row")

    @property
    def output_size(self) -> int:
        return self.l_max - 1

    @property
    def cnn_flat_size(self) -> int:
        h1 = self.l_max - self.conv1_kernel[0] + 1
        p1 = h1 // self.pool[0]
        h2 = p1 - self.conv2_kernel[0] + 1
        p2 = h2 // self.pool[0]
        return p2 * self.conv_filters

    @property
    def lstm_flat_size(self) -> int:
        return self.l_max * 2 * self.lstm_hidden

    @property
    def encoding_size(self) -> int:
        return self.cnn_flat_size + self.lstm_flat_size


@dataclass(frozen=True)
class InferenceConfig:
    threshold: float = 0.5
    overlap: int = 30
    l_max: int = 100

    def __post_init__(self) -> None:
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if not 0 < self.overlap < self.l_max:
            raise ValueError("overlap must satisfy 0 < overlap < l_max")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 128
    learning_rate: float = 0.0005
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


class _Network:
    """Layer assembly and hand-chained forward/backward."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        k1, k2 = cfg.conv1_kernel, cfg.conv2_kernel
        self.conv1 = nn.Conv2D(k1[0], k1[1], 1, cfg.conv_filters, rng, dtype, "conv1")
        self.relu1 = nn.ReLU()
        self.pool1 = nn.MaxPool2D(*cfg.pool)
        self.conv2 = nn.Conv2D(k2[0], k2[1], cfg.conv_filters, cfg.conv_filters, rng, dtype, "conv2")
        self.relu2 = nn.ReLU()
        self.pool2 = nn.MaxPool2D(*cfg.pool)
        self.bilstm = nn.BiLSTM(cfg.embed_dim, cfg.lstm_hidden, rng, dtype, "bilstm")
        self.fc1 = nn.Dense(cfg.encoding_size, cfg.mlp_hidden, rng, dtype, "fc1")
        self.relu3 = nn.ReLU()
        self.drop1 = nn.Dropout(cfg.dropout, rng)
        self.fc2 = nn.Dense(cfg.mlp_hidden, cfg.mlp_hidden, rng, dtype, "fc2")
        self.relu4 = nn.ReLU()
        self.drop2 = nn.Dropout(cfg.dropout, rng)
        self.out = nn.Dense(cfg.mlp_hidden, cfg.output_size, rng, dtype, "out")
        self.relu5 = nn.ReLU()

    def params(self) -> list[nn.Parameter]:
        """Declaration order; also the model-file tensor order."""
        return (
            self.conv1.params()
            + self.conv2.params()
            + self.bilstm.params()
            + self.fc1.params()
            + self.fc2.params()
            + self.out.params()
        )

    def encode(self, x: np.ndarray) -> np.ndarray:
        """(N, L_max, D) character matrix -> (N, encoding_size)."""
        n = x.shape[0]
        a = self.pool1.forward(self.relu1.forward(self.conv1.forward(x[..., None])))
        a = self.pool2.forward(self.relu2.forward(self.conv2.forward(a)))
        b = self.bilstm.forward(x)
        return np.concatenate([a.reshape(n, -1), b.reshape(n, -1)], axis=1)

    def decode(self, encoding: np.ndarray, train: bool) -> np.ndarray:
        h = self.drop1.forward(self.relu3.forward(self.fc1.forward(encoding)), train)
        h = self.drop2.forward(self.relu4.forward(self.fc2.forward(h)), train)
        return self.relu5.forward(self.out.forward(h))

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._x_shape = x.shape
        return self.decode(self.encode(x), train)

    def backward(self, dscores: np.ndarray, need_dx: bool = False) -> Optional[np.ndarray]:
        d = self.out.backward(self.relu5.backward(dscores))
        d = self.fc2.backward(self.relu4.backward(self.drop2.backward(d)))
        d = self.fc1.backward(self.relu3.backward(self.drop1.backward(d)))
        n = self._x_shape[0]
        split = self.cfg.cnn_flat_size
        da = d[:, :split].reshape(n, -1, 1, self.cfg.conv_filters)
        db = d[:, split:].reshape(n, self.cfg.l_max, 2 * self.cfg.lstm_hidden)
        da = self.relu2.backward(self.pool2.backward(da))
        da = self.conv2.backward(da, need_dx=True)
        da = self.relu1.backward(self.pool1.backward(da))
        dx_cnn = self.conv1.backward(da, need_dx=need_dx)
        dx_lstm = self.bilstm.backward(db, need_dx=need_dx)
        if not need_dx:
            return None
        return dx_cnn[..., 0] + dx_lstm

    def pool_tie_state(self) -> list[np.ndarray]:
        return [self.pool1.last_argmax, self.pool2.last_argmax]


class SegmenterModel:
    """Learnable segmenter bound to a frozen embedding table."""

    def __init__(
        self,
        config: ModelConfig,
        embeddings: EmbeddingTable,
        seed: int = 0,
        dtype=np.float32,
    ):
        if embeddings.dim != config.embed_dim:
            raise ValueError(
                f"embedding dim {embeddings.dim} != model embed dim {config.embed_dim}"
            )
        self.config = config
        self.embeddings = embeddings
        self.net = _Network(config, np.random.Generator(np.random.PCG64(seed)), dtype)
        self.dtype = dtype

    def embed_batch(self, sentences: list[str]) -> np.ndarray:
        """Stack per-character vectors, zero-padded to l_max rows each."""
        cfg = self.config
        x = np.zeros((len(sentences), cfg.l_max, cfg.embed_dim), dtype=self.dtype)
        for row, text in enumerate(sentences):
            if len(text) > cfg.l_max:
                raise ValueError(f"sentence of {len(text)} chars exceeds window {cfg.l_max}")
            for col, ch in enumerate(text):
                x[row, col, :] = self.embeddings.lookup(ch)
        return x

    def encode(self, chars: CharSequence | str) -> np.ndarray:
        """Encoding vector of one sentence of at most l_max characters."""
        text = chars.text if isinstance(chars, CharSequence) else chars
        return self.net.encode(self.embed_batch([text]))[0]

    def score_batch(self, sentences: list[str], train: bool = False) -> np.ndarray:
        return self.net.forward(self.embed_batch(sentences), train)

    def infer_boundaries(
        self, chars: CharSequence | str, cfg: InferenceConfig
    ) -> tuple[np.ndarray, BoundaryLabels]:
        """Scores and thresholded labels for the gaps of one sentence."""
        text = chars.text if isinstance(chars, CharSequence) else chars
        if not 1 <= len(text) <= cfg.l_max:
            raise ValueError(f"inference needs 1 <= L <= {cfg.l_max}, got {len(text)}")
        scores = self.score_batch([text])[0][: len(text) - 1]
        labels = BoundaryLabels(tuple(int(s > cfg.threshold) for s in scores))
        return scores, labels

    def gap_scores(self, chars: CharSequence | str, cfg: InferenceConfig) -> np.ndarray:
        """Model scores for every gap of an arbitrarily long sentence.

        Inputs up to l_max go through one window.  Longer inputs use the
        overlap-hopping schedule; in overlapping regions the later window's
        prediction overrides the earlier one.
        """
        text = chars.text if isinstance(chars, CharSequence) else chars
        length = len(text)
        if length < 2:
            return np.zeros(max(length - 1, 0), dtype=self.dtype)
        if length <= cfg.l_max:
            return self.score_batch([text])[0][: length - 1]
        starts = window_starts(length, cfg.l_max, cfg.overlap)
        windows = [text[s : s + cfg.l_max] for s in starts]
        scores = self.score_batch(windows)
        merged = np.zeros(length - 1, dtype=self.dtype)
        for k, s in enumerate(starts):
            merged[s : s + cfg.l_max - 1] = scores[k][: cfg.l_max - 1]
        return merged

    def segment(self, text: str, cfg: InferenceConfig) -> str:
        """Insert spaces into ``text``; user-typed spaces are kept (OR)."""
        chars, user = despace(text)
        if len(chars) == 0:
            return ""
        scores = self.gap_scores(chars, cfg)
        labels = tuple(
            int(bool(u) or s > cfg.threshold) for u, s in zip(user, scores)
        )
        return apply_labels(chars, BoundaryLabels(labels))

    def segment_long(self, text: str, cfg: InferenceConfig) -> str:
        """Windowed form of :meth:`segment`; identical for L <= l_max by
        construction since both share the same score path."""
        return self.segment(text, cfg)


def window_starts(length: int, width: int, overlap: int) -> list[int]:
    """Start offsets of the overlap-hopping schedule.

    Windows advance by ``width - overlap``; the final window is shifted
    left so it ends exactly at ``length``.  Every gap is covered and later
    windows take precedence where they overlap earlier ones.
    """
    if not 0 < overlap < width:
        raise ValueError("overlap must satisfy 0 < overlap < width")
    if length <= width:
        return [0]
    hop = width - overlap
    starts = [0]
    while True:
        nxt = starts[-1] + hop
        if nxt + width >= length:
            final = length - width
            if final != starts[-1]:
                starts.append(final)
            break
        starts.append(nxt)
    return starts


@dataclass
class TrainReport:
    examples: int
    skipped_long: int
    epochs: list[dict] = field(default_factory=list)


def train_model(
    model: SegmenterModel,
    corpus: Iterable[tuple[CharSequence, BoundaryLabels]],
    tc: TrainConfig,
    holdout: Optional[list[tuple[CharSequence, BoundaryLabels]]] = None,
    inference: Optional[InferenceConfig] = None,
    log=None,
) -> TrainReport:
    """Mini-batch Adam training with the masked MSE objective.

    Targets are 1.0/0.0 per gap; positions at or beyond each sentence's
    last gap are masked out.  Sentences longer than l_max (or shorter than
    two characters) are skipped and counted.  The embedding table is
    frozen.  ``log``, when given, receives one dict per epoch.
    """
    cfg = model.config
    data: list[tuple[str, tuple[int, ...]]] = []
    skipped = 0
    for chars, labels in corpus:
        if len(chars) > cfg.l_max or len(chars) < 2:
            skipped += 1
            continue
        data.append((chars.text, tuple(labels)))
    if not data:
        raise ValueError("empty training corpus after length filtering")

    inference = inference or InferenceConfig(l_max=cfg.l_max, overlap=min(30, cfg.l_max - 1))
    rng = np.random.Generator(np.random.PCG64(tc.seed))
    params = model.net.params()
    report = TrainReport(examples=len(data), skipped_long=skipped)

    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(data))
        loss_sum = 0.0
        batches = 0
        for lo in range(0, len(data), tc.batch_size):
            idx = order[lo : lo + tc.batch_size]
            sentences = [data[i][0] for i in idx]
            targets = np.zeros((len(idx), cfg.output_size), dtype=model.dtype)
            mask = np.zeros_like(targets)
            for row, i in enumerate(idx):
                labels = data[i][1]
                targets[row, : len(labels)] = labels
                mask[row, : len(labels)] = 1.0
            scores = model.score_batch(sentences, train=True)
            loss, dscores = nn.masked_mse_loss(scores, targets, mask)
            model.net.backward(dscores, need_dx=False)
            nn.adam_step(params, tc.learning_rate)
            loss_sum += loss
            batches += 1
        entry = {"epoch": epoch, "loss": loss_sum / batches}
        if holdout:
            entry["holdout_f1"] = evaluate_f1(model, holdout, inference)
        report.epochs.append(entry)
        if log is not None:
            log(entry)
    return report


def evaluate_f1(
    model: SegmenterModel,
    pairs: list[tuple[CharSequence, BoundaryLabels]],
    cfg: InferenceConfig,
    batch_size: int = 256,
) -> float:
    """Micro boundary F1 of thresholded predictions over labeled pairs."""
    results = []
    usable = [(c, l) for c, l in pairs if 2 <= len(c) <= cfg.l_max]
    for lo in range(0, len(usable), batch_size):
        chunk = usable[lo : lo + batch_size]
        scores = model.score_batch([c.text for c, _ in chunk])
        for row, (chars, gold) in enumerate(chunk):
            pred = [int(s > cfg.threshold) for s in scores[row][: len(chars) - 1]]
            results.append((pred, list(gold)))
    return corpus_metrics(results).f1


def _write_tensor(fh, array: np.ndarray) -> None:
    fh.write(struct.pack("<i", array.ndim))
    fh.write(struct.pack(f"<{array.ndim}i", *array.shape))
    fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _read_exact(fh, size: int, what: str) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise ModelIOError(f"truncated model file while reading {what}")
    return data


def _read_tensor(fh, expected_shape: tuple[int, ...], name: str) -> np.ndarray:
    (ndim,) = struct.unpack("<i", _read_exact(fh, 4, f"{name} ndim"))
    if ndim != len(expected_shape):
        raise ModelIOError(f"{name}: rank {ndim} != expected {len(expected_shape)}")
    shape = struct.unpack(f"<{ndim}i", _read_exact(fh, 4 * ndim, f"{name} shape"))
    if tuple(shape) != tuple(expected_shape):
        raise ModelIOError(f"{name}: shape {shape} != expected {tuple(expected_shape)}")
    count = int(np.prod(shape)) if shape else 1
    data = _read_exact(fh, 4 * count, f"{name} data")
    return np.frombuffer(data, dtype="<f4").reshape(shape).copy()


_CONFIG_FIELDS = 15


def save_model(model: SegmenterModel, path: str) -> None:
    """Binary model file: magic, int32 config block, tensors in declaration
    order with per-tensor shape headers, float32 little-endian."""
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(
            struct.pack(
                f"<{_CONFIG_FIELDS}i",
                cfg.l_max,
                cfg.embed_dim,
                cfg.conv_filters,
                cfg.conv1_kernel[0],
                cfg.conv1_kernel[1],
                cfg.conv2_kernel[0],
                cfg.conv2_kernel[1],
                cfg.pool[0],
                cfg.pool[1],
                cfg.conv_layers,
                cfg.lstm_hidden,
                cfg.mlp_hidden,
                cfg.mlp_layers,
                cfg.output_size,
                round(cfg.dropout * 1_000_000),
            )
        )
        for p in model.net.params():
            _write_tensor(fh, p.value)


def load_model(path: str, embeddings: EmbeddingTable) -> SegmenterModel:
    """Inverse of :func:`save_model`; every mismatch names the field."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise ModelIOError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
        raw = struct.unpack(
            f"<{_CONFIG_FIELDS}i",
            _read_exact(fh, 4 * _CONFIG_FIELDS, "config block"),
        )
        try:
            cfg = ModelConfig(
                l_max=raw[0],
                embed_dim=raw[1],
                conv_filters=raw[2],
                conv1_kernel=(raw[3], raw[4]),
                conv2_kernel=(raw[5], raw[6]),
                pool=(raw[7], raw[8]),
                conv_layers=raw[9],
                lstm_hidden=raw[10],
                mlp_hidden=raw[11],
                mlp_layers=raw[12],
                dropout=raw[14] / 1_000_000,
            )
        except ValueError as exc:
            raise ModelIOError(f"invalid config block: {exc}") from exc
        if raw[13] != cfg.output_size:
            raise ModelIOError(
                f"output_size: stored {raw[13]} != l_max - 1 = {cfg.output_size}"
            )
        model = SegmenterModel(cfg, embeddings)
        for p in model.net.params():
            p.value = _read_tensor(fh, p.value.shape, p.name)
            p.grad = np.zeros_like(p.value)
            p.m = np.zeros_like(p.value)
            p.v = np.zeros_like(p.value)
        trailing = fh.read(1)
        if trailing:
            raise ModelIOError("trailing bytes after last tensor")
    return model


def model_file_id(path: str) -> str:
    """Short content hash used as the served model id."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()[:12]


def full_stack_fragment(seed: int, config: Optional[ModelConfig] = None):
    """The whole encoder/decoder in float64 for gradient verification.

    Dropout runs in inference mode so the loss is deterministic.  Returns
    (loss_fn, params, tie_state).
    """
    cfg = config or ModelConfig()
    rng = np.random.default_rng(seed)
    net = _Network(cfg, np.random.Generator(np.random.PCG64(seed)), dtype=np.float64)
    x = rng.normal(scale=0.5, size=(2, cfg.l_max, cfg.embed_dim))
    # Target rides on the initial output so the loss stays small; a large
    # constant offset would leave the finite differences cancellation-bound.
    target = net.forward(x, train=False) + rng.normal(
        scale=0.1, size=(2, cfg.output_size)
    )
    mask = np.zeros_like(target)
    mask[0, : cfg.output_size // 2] = 1.0
    mask[1, :] = 1.0

    def loss_fn(grad: bool) -> float:
        scores = net.forward(x, train=False)
        loss, dscores = nn.masked_mse_loss(scores, target, mask)
        if grad:
            net.backward(dscores, need_dx=False)
        return loss

    return loss_fn, net.params(), net.pool_tie_state

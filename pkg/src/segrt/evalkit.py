"""Evaluation: boundary-level segmentation metrics against gold labels and
the subjective system-rank score S = (N + 1 - R) / N with competition tie
ranking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .textcore import BoundaryLabels


class SurveyError(Exception):
    """A survey file is malformed or violates the ranking invariant."""


@dataclass(frozen=True)
class BoundaryMetrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    word_accuracy: float
    exact_match: float


def _labels(x) -> list[int]:
    return list(x.labels) if isinstance(x, BoundaryLabels) else list(x)


def _word_spans(labels: Sequence[int]) -> list[tuple[int, int]]:
    """Half-open character spans delimited by the label vector's 1s."""
    spans = []
    start = 0
    for i, flag in enumerate(labels):
        if flag:
            spans.append((start, i + 1))
            start = i + 1
    spans.append((start, len(labels) + 1))
    return spans


def _counts(pred: Sequence[int], gold: Sequence[int]) -> tuple[int, int, int, int, int]:
    tp = fp = fn = 0
    for p, g in zip(pred, gold):
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
    gold_words = _word_spans(gold)
    pred_words = set(_word_spans(pred))
    correct_words = sum(1 for span in gold_words if span in pred_words)
    return tp, fp, fn, correct_words, len(gold_words)


def _rates(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def boundary_metrics(pred, gold) -> BoundaryMetrics:
    """Position-level boundary metrics for one sentence pair.

    A gold word counts as accurate when it appears as a predicted word,
    i.e. both its delimiting boundaries (or string ends) are reproduced
    and no extra space falls inside it.
    """
    pred, gold = _labels(pred), _labels(gold)
    if len(pred) != len(gold):
        raise ValueError(f"label lengths differ: {len(pred)} vs {len(gold)}")
    tp, fp, fn, correct_words, total_words = _counts(pred, gold)
    precision, recall, f1 = _rates(tp, fp, fn)
    return BoundaryMetrics(
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        word_accuracy=correct_words / total_words if total_words else 0.0,
        exact_match=1.0 if pred == gold else 0.0,
    )


def corpus_metrics(pairs: Iterable[tuple]) -> BoundaryMetrics:
    """Micro-aggregated boundary metrics over (pred, gold) label pairs."""
    tp = fp = fn = 0
    correct_words = total_words = 0
    exact = total = 0
    for pred, gold in pairs:
        pred, gold = _labels(pred), _labels(gold)
        if len(pred) != len(gold):
            raise ValueError(f"label lengths differ: {len(pred)} vs {len(gold)}")
        p_tp, p_fp, p_fn, p_cw, p_tw = _counts(pred, gold)
        tp += p_tp
        fp += p_fp
        fn += p_fn
        correct_words += p_cw
        total_words += p_tw
        exact += pred == gold
        total += 1
    precision, recall, f1 = _rates(tp, fp, fn)
    return BoundaryMetrics(
        tp=tp,
        fp=fp,
        fn=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        word_accuracy=correct_words / total_words if total_words else 0.0,
        exact_match=exact / total if total else 0.0,
    )


@dataclass(frozen=True)
class RankSurvey:
    """Per-item per-system competition ranks; complete over items x systems."""

    systems: tuple[str, ...]
    items: tuple[str, ...]
    ranks: np.ndarray  # (items, systems), int

    def __post_init__(self) -> None:
        m, n = self.ranks.shape
        if (m, n) != (len(self.items), len(self.systems)):
            raise SurveyError("rank matrix shape does not match items/systems")
        for row in range(m):
            validate_competition_ranks(self.ranks[row].tolist())


def validate_competition_ranks(ranks: Sequence[int]) -> None:
    """Check the "1224" invariant: every rank equals 1 + count of strictly
    better entries."""
    n = len(ranks)
    for r in ranks:
        if not 1 <= r <= n:
            raise SurveyError(f"rank {r} outside 1..{n}")
        better = sum(1 for other in ranks if other < r)
        if r != 1 + better:
            raise SurveyError(f"ranks {sorted(ranks)} are not a competition ranking")


def ranks_from_ordering(groups: Sequence[Iterable[str]]) -> dict[str, int]:
    """Competition ranks from ordered tie groups, best group first."""
    if not groups:
        raise ValueError("empty preference ordering")
    ranks: dict[str, int] = {}
    ahead = 0
    for group in groups:
        members = list(group)
        if not members:
            raise ValueError("empty tie group")
        for system in members:
            if system in ranks:
                raise ValueError(f"system {system!r} appears twice")
            ranks[system] = 1 + ahead
        ahead += len(members)
    return ranks


def system_rank(survey: RankSurvey, system: str) -> float:
    """S = (N + 1 - R) / N for the system's mean rank R; 1 is best, 1/N
    the worst possible."""
    if len(survey.items) == 0:
        raise ValueError("survey has no items")
    col = survey.systems.index(system)
    n = len(survey.systems)
    mean_rank = float(survey.ranks[:, col].mean())
    return (n + 1 - mean_rank) / n


def compare_systems(survey: RankSurvey) -> list[dict]:
    """Per-system mean rank and S, sorted by S descending."""
    rows = []
    for system in survey.systems:
        col = survey.systems.index(system)
        rows.append(
            {
                "system": system,
                "mean_rank": float(survey.ranks[:, col].mean()),
                "s": system_rank(survey, system),
            }
        )
    rows.sort(key=lambda r: -r["s"])
    return rows


def load_survey(path: str) -> RankSurvey:
    """Parse an "item,system,rank" CSV into a complete RankSurvey."""
    cells: dict[tuple[str, str], int] = {}
    systems: list[str] = []
    items: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SurveyError(f"{path}: empty survey file")
        if [h.strip() for h in header] != ["item", "system", "rank"]:
            raise SurveyError(f"{path}:1: expected header 'item,system,rank'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SurveyError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            item, system, rank_str = (field.strip() for field in row)
            try:
                rank = int(rank_str)
            except ValueError:
                raise SurveyError(f"{path}:{lineno}: bad rank {rank_str!r}") from None
            if (item, system) in cells:
                raise SurveyError(f"{path}:{lineno}: duplicate entry for {item}/{system}")
            cells[(item, system)] = rank
            if system not in systems:
                systems.append(system)
            if item not in items:
                items.append(item)
    if not cells:
        raise SurveyError(f"{path}: survey has no data rows")
    ranks = np.empty((len(items), len(systems)), dtype=int)
    for i, item in enumerate(items):
        for j, system in enumerate(systems):
            if (item, system) not in cells:
                raise SurveyError(f"{path}: missing rank for item {item!r}, system {system!r}")
            ranks[i, j] = cells[(item, system)]
    return RankSurvey(systems=tuple(systems), items=tuple(items), ranks=ranks)

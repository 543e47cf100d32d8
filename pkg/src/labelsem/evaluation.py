"""Micro-averaged metrics, threshold sweeps, empirical label correlations,
and the approximate randomization significance test.

Micro-averaging pools true/false positive/negative counts over every
(instance, label) cell before computing precision, recall, and F1, so
frequent labels weigh in proportionally. The significance test builds a null
distribution for the F1 difference of two systems by randomly swapping whole
instances' prediction vectors between them.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import LABELS, NUM_LABELS, DataError, label_names, label_vector
from .numerics import seeded_rng


@dataclass
class MetricReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


def _prf(tp: int, fp: int, fn: int) -> MetricReport:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricReport(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


def _as_label_matrix(vectors, name: str) -> np.ndarray:
    matrix = np.asarray(vectors, dtype=int)
    if matrix.ndim != 2:
        raise ValueError(f"{name} must be a list of equal-length label vectors")
    return matrix


def micro_prf(gold, pred) -> MetricReport:
    """Micro-averaged precision/recall/F1 over all (instance, label) cells."""
    gold = _as_label_matrix(gold, "gold")
    pred = _as_label_matrix(pred, "pred")
    if gold.shape != pred.shape:
        raise ValueError(f"gold shape {gold.shape} != pred shape {pred.shape}")
    tp = int(np.sum((gold == 1) & (pred == 1)))
    fp = int(np.sum((gold == 0) & (pred == 1)))
    fn = int(np.sum((gold == 1) & (pred == 0)))
    return _prf(tp, fp, fn)


def threshold_sweep(gold, scores, grid: list[float]) -> tuple[float, MetricReport]:
    """Best F1 threshold over a grid.

    Ties go first to the threshold nearest 0.5, then to the lower one.
    """
    if not grid:
        raise ValueError("threshold grid must be non-empty")
    gold = _as_label_matrix(gold, "gold")
    scores = np.asarray(scores, dtype=float)
    best = None
    for cut in grid:
        report = micro_prf(gold, (scores >= cut).astype(int))
        key = (-report.f1, abs(cut - 0.5), cut)
        if best is None or key < best[0]:
            best = (key, cut, report)
    return best[1], best[2]


def empirical_correlations(labels) -> np.ndarray:
    """Pearson correlation matrix of the binary label columns.

    Constant columns (never or always active) get zeros in their row and
    column, diagonal included, with a warning; everything else has a unit
    diagonal and entries in [-1, 1].
    """
    matrix = _as_label_matrix(labels, "labels").astype(float)
    if matrix.shape[0] < 2:
        raise ValueError("need at least 2 instances to estimate correlations")
    centered = matrix - matrix.mean(axis=0)
    std = centered.std(axis=0)
    constant = std == 0.0
    if np.any(constant):
        names = [LABELS[i] for i in np.nonzero(constant)[0] if i < len(LABELS)]
        warnings.warn(
            f"constant label columns {names or np.nonzero(constant)[0].tolist()}: "
            "correlation undefined, reporting zeros",
            stacklevel=2,
        )
    safe_std = np.where(constant, 1.0, std)
    normalized = centered / safe_std
    corr = normalized.T @ normalized / matrix.shape[0]
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    diag = np.where(constant, 0.0, 1.0)
    np.fill_diagonal(corr, diag)
    return np.clip(corr, -1.0, 1.0)


@dataclass
class SignificanceResult:
    """Observed F1 difference, permutation count, and the two-sided p-value
    with add-one smoothing (never exactly zero)."""

    statistic: float
    permutations: int
    p_value: float
    null_statistics: np.ndarray | None = field(default=None, repr=False)


def _cell_counts(gold: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Per-instance [tp, fp, fn] counts, shape (n, 3)."""
    tp = ((gold == 1) & (pred == 1)).sum(axis=1)
    fp = ((gold == 0) & (pred == 1)).sum(axis=1)
    fn = ((gold == 1) & (pred == 0)).sum(axis=1)
    return np.stack([tp, fp, fn], axis=1).astype(float)


def _f1_from_counts(counts: np.ndarray) -> np.ndarray:
    """Micro-F1 from summed [tp, fp, fn]; vectorized over leading axes."""
    tp, fp, fn = counts[..., 0], counts[..., 1], counts[..., 2]
    denom = 2 * tp + fp + fn
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(denom > 0, 2 * tp / denom, 0.0)
    return f1


def randomization_test(
    preds_a,
    preds_b,
    gold,
    permutations: int,
    seed: int,
    streams: int = 1,
    keep_null: bool = False,
) -> SignificanceResult:
    """Approximate randomization test on the micro-F1 difference of two
    aligned prediction lists.

    Every permutation swaps each instance's prediction vectors between the
    systems with probability one half; the two-sided p-value counts
    permutations whose absolute statistic reaches the observed one, with
    add-one smoothing. ``streams`` splits the permutations across independent
    seed-derived random streams (deterministic for a fixed stream count; the
    default single stream is the reference behaviour).
    """
    gold = _as_label_matrix(gold, "gold")
    preds_a = _as_label_matrix(preds_a, "preds_a")
    preds_b = _as_label_matrix(preds_b, "preds_b")
    if not (gold.shape == preds_a.shape == preds_b.shape):
        raise ValueError("gold and both prediction lists must be aligned")
    if permutations < 1:
        raise ValueError("permutations must be >= 1")
    if streams < 1:
        raise ValueError("streams must be >= 1")

    counts_a = _cell_counts(gold, preds_a)
    counts_b = _cell_counts(gold, preds_b)
    observed = float(_f1_from_counts(counts_a.sum(axis=0)) - _f1_from_counts(counts_b.sum(axis=0)))

    per_stream = [permutations // streams] * streams
    for i in range(permutations % streams):
        per_stream[i] += 1

    hits = 0
    null_chunks = [] if keep_null else None
    total_a, total_b = counts_a.sum(axis=0), counts_b.sum(axis=0)
    delta = counts_b - counts_a  # swapping instance i moves its counts across
    for stream_index, count in enumerate(per_stream):
        rng = seeded_rng(seed) if streams == 1 else np.random.default_rng([seed, stream_index])
        done = 0
        while done < count:
            chunk = min(count - done, 20_000)
            swaps = rng.random((chunk, gold.shape[0])) < 0.5
            moved = swaps @ delta
            stats = _f1_from_counts(total_a + moved) - _f1_from_counts(total_b - moved)
            hits += int(np.sum(np.abs(stats) >= abs(observed)))
            if null_chunks is not None:
                null_chunks.append(stats)
            done += chunk
    p_value = (1 + hits) / (1 + permutations)
    null = np.concatenate(null_chunks) if null_chunks else None
    return SignificanceResult(
        statistic=observed, permutations=permutations, p_value=p_value, null_statistics=null
    )


def exact_randomization_p(preds_a, preds_b, gold) -> float:
    """Exact two-sided p over all 2^n swap assignments (small n only)."""
    gold = _as_label_matrix(gold, "gold")
    preds_a = _as_label_matrix(preds_a, "preds_a")
    preds_b = _as_label_matrix(preds_b, "preds_b")
    n = gold.shape[0]
    if n > 20:
        raise ValueError("exhaustive enumeration is limited to 20 instances")
    counts_a = _cell_counts(gold, preds_a)
    counts_b = _cell_counts(gold, preds_b)
    total_a, total_b = counts_a.sum(axis=0), counts_b.sum(axis=0)
    observed = float(_f1_from_counts(total_a) - _f1_from_counts(total_b))
    delta = counts_b - counts_a
    assignments = np.arange(2 ** n)
    swaps = (assignments[:, None] >> np.arange(n)) & 1
    moved = swaps @ delta
    stats = _f1_from_counts(total_a + moved) - _f1_from_counts(total_b - moved)
    return float(np.mean(np.abs(stats) >= abs(observed)))


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


@dataclass
class PredictionRow:
    """One line of a prediction file: instance key, scores, label names."""

    story_id: str
    line: int
    character: str
    scores: list[float]
    labels: list[str]

    def to_json(self) -> dict:
        return {
            "story_id": self.story_id,
            "line": self.line,
            "character": self.character,
            "scores": list(self.scores),
            "labels": list(self.labels),
        }

    def label_bits(self) -> list[int]:
        return label_vector(self.labels)


def save_predictions(path, rows: list[PredictionRow]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row.to_json()) + "\n")


def load_predictions(path) -> list[PredictionRow]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"malformed JSON at line {lineno}: {exc.msg}") from None
            try:
                scores = [float(v) for v in obj["scores"]]
                row = PredictionRow(
                    story_id=obj["story_id"],
                    line=int(obj["line"]),
                    character=obj["character"],
                    scores=scores,
                    labels=list(obj["labels"]),
                )
            except (KeyError, TypeError, ValueError):
                raise DataError(f"bad prediction record at line {lineno}") from None
            if len(row.scores) != NUM_LABELS:
                raise DataError(
                    f"expected {NUM_LABELS} scores at line {lineno}, got {len(row.scores)}"
                )
            rows.append(row)
    return rows


def correlation_to_dict(matrix: np.ndarray) -> dict:
    """Label-name-keyed nested mapping of a KxK correlation matrix."""
    return {
        row: {col: float(matrix[i, j]) for j, col in enumerate(LABELS)}
        for i, row in enumerate(LABELS)
    }


def correlation_to_csv(matrix: np.ndarray) -> str:
    """CSV with a header row and label-name row keys, heatmap-ready."""
    lines = ["," + ",".join(LABELS)]
    for i, name in enumerate(LABELS):
        lines.append(name + "," + ",".join(f"{matrix[i, j]:.6f}" for j in range(NUM_LABELS)))
    return "\n".join(lines) + "\n"

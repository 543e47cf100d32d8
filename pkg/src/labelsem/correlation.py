"""The label-correlation head.

A learned K x K matrix couples the label logits at inference time (each
label's score becomes a correlation-weighted blend of all logits before the
sigmoid), relaxes the gold labels into soft targets for a second BCE term
during training, and drives a score-distance regularizer on unlabeled data
that pulls positively correlated label scores together and pushes negatively
correlated ones apart.

The gradient helpers here treat the logit vector and the correlation matrix
as free inputs, which keeps them independently checkable; the model composes
them with the encoder/attention backward passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import NUM_LABELS

SCORE_EPS = 1e-12  # BCE clamp bound for scores touching 0 or 1


@dataclass
class PredictionRecord:
    """Per-instance outcome: raw logits, coupled scores in (0,1), and the
    thresholded label set."""

    logits: np.ndarray
    scores: np.ndarray
    labels: list[str] = field(default_factory=list)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    expx = np.exp(x[~positive])
    out[~positive] = expx / (1.0 + expx)
    return out


def correlate_logits(logits: np.ndarray, corr: np.ndarray) -> np.ndarray:
    """Coupled prediction scores: sigmoid of the logits right-multiplied by
    the correlation matrix. Works on a single K-vector or an (n, K) batch."""
    logits = np.asarray(logits, dtype=float)
    return sigmoid(logits @ corr)


def soft_targets(labels: np.ndarray, corr: np.ndarray) -> np.ndarray:
    """Continuous target relaxation: the gold vector right-multiplied by the
    correlation matrix, clamped into [0, 1] so BCE stays well defined."""
    labels = np.asarray(labels, dtype=float)
    return np.clip(labels @ corr, 0.0, 1.0)


def bce(scores: np.ndarray, targets: np.ndarray) -> float:
    """Mean binary cross-entropy over label cells, scores clamped away from
    0 and 1 before the logs."""
    s = np.clip(np.asarray(scores, dtype=float), SCORE_EPS, 1.0 - SCORE_EPS)
    t = np.asarray(targets, dtype=float)
    return float(np.mean(-(t * np.log(s) + (1.0 - t) * np.log(1.0 - s))))


def total_loss(scores: np.ndarray, labels: np.ndarray, corr: np.ndarray,
               corr_weight: float = 1.0) -> float:
    """Dual training loss: BCE against the gold labels plus a weighted BCE
    against the correlation-relaxed soft targets."""
    return bce(scores, labels) + corr_weight * bce(scores, soft_targets(labels, corr))


def pair_distance(score_i: float, score_j: float, corr_ij: float) -> float:
    """Score distance for one label pair: plain absolute difference under a
    non-negative coupling, shifted down by one under a negative coupling (so
    minimizing it spreads the pair apart)."""
    gap = abs(score_i - score_j)
    return gap if corr_ij >= 0.0 else gap - 1.0


def reg_loss(scores: np.ndarray, corr: np.ndarray) -> float:
    """Correlation-consistency penalty on a batch of score vectors.

    Mean over instances of the coupling-weighted pair distances over all
    ordered off-diagonal label pairs. Every term is non-negative: the sign of
    the coupling picks the distance branch.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    if scores.size == 0:
        raise ValueError("reg_loss requires a non-empty batch")
    gaps = np.abs(scores[:, :, None] - scores[:, None, :])
    branch = np.where(corr >= 0.0, gaps, gaps - 1.0)
    off_diag = ~np.eye(corr.shape[0], dtype=bool)
    return float(np.mean((corr * branch)[:, off_diag].sum(axis=1)))


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def _bce_grad_wrt_scores(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d mean-BCE / d score, zero where the clamp is active."""
    clamped = np.clip(scores, SCORE_EPS, 1.0 - SCORE_EPS)
    grad = (-targets / clamped + (1.0 - targets) / (1.0 - clamped)) / scores.size
    return grad * (scores == clamped)


def total_loss_grads(
    logits: np.ndarray,
    labels: np.ndarray,
    corr: np.ndarray,
    corr_weight: float = 1.0,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Loss, scores, and gradients w.r.t. the logits and correlation matrix.

    The correlation matrix enters twice: through the coupled scores and
    through the soft targets. Both paths are differentiated; the soft-target
    path stops where its [0, 1] clamp binds.
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=float)
    coupled = logits @ corr
    scores = sigmoid(coupled)
    raw_targets = labels @ corr
    soft = np.clip(raw_targets, 0.0, 1.0)
    loss = bce(scores, labels) + corr_weight * bce(scores, soft)

    sig_slope = scores * (1.0 - scores)
    d_coupled = (_bce_grad_wrt_scores(scores, labels)
                 + corr_weight * _bce_grad_wrt_scores(scores, soft)) * sig_slope
    d_logits = corr @ d_coupled
    d_corr = np.outer(logits, d_coupled)

    clamped_scores = np.clip(scores, SCORE_EPS, 1.0 - SCORE_EPS)
    d_soft = corr_weight * (np.log(1.0 - clamped_scores) - np.log(clamped_scores)) / scores.size
    inside_clamp = (raw_targets > 0.0) & (raw_targets < 1.0)
    d_corr += np.outer(labels, d_soft * inside_clamp)
    return loss, scores, d_logits, d_corr


def reg_loss_grads(
    logits: np.ndarray, corr: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Regularizer loss and gradients w.r.t. a logit batch and the matrix.

    The matrix enters both directly (as the pair weights) and through the
    coupled scores; both contributions are included.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    n, k = logits.shape
    scores = sigmoid(logits @ corr)
    diffs = scores[:, :, None] - scores[:, None, :]
    gaps = np.abs(diffs)
    branch = np.where(corr >= 0.0, gaps, gaps - 1.0)
    off_diag = ~np.eye(k, dtype=bool)
    loss = float(np.mean((corr * branch)[:, off_diag].sum(axis=1)))

    d_corr = np.where(off_diag, branch.mean(axis=0), 0.0)

    # d loss / d score: each ordered pair (i, j) contributes corr_ij * sign of
    # the (i - j) difference to score i and its negation to score j.
    signs = np.sign(diffs) * off_diag
    d_scores = ((corr * signs).sum(axis=2) - (corr * signs).sum(axis=1)) / n
    d_coupled = d_scores * scores * (1.0 - scores)
    d_logits = d_coupled @ corr.T
    d_corr += logits.T @ d_coupled
    return loss, d_logits, d_corr


def plain_loss_grads(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Uncoupled BCE loss and its logit gradient (no correlation head)."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=float)
    scores = sigmoid(logits)
    loss = bce(scores, labels)
    d_logits = _bce_grad_wrt_scores(scores, labels) * scores * (1.0 - scores)
    return loss, scores, d_logits


def clamp_diagonal(corr: np.ndarray, low: float = 0.5, high: float = 1.5) -> np.ndarray:
    """Keep the matrix diagonal inside [low, high] so inference never learns
    to ignore a label's own logit. Applied in place after each update."""
    diag = np.clip(np.diag(corr), low, high)
    np.fill_diagonal(corr, diag)
    return corr

"""Label-attentive pooling.

Compatibility between label embeddings and token states is cosine similarity
(normalized inner products, with a zero-vector guard). Per-token attention
scores take the best label after an optional uniform window smoothing of the
compatibility matrix; a softmax over tokens then weights the token states
into a single pooled representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_NORM_EPS = 0.0  # zero vectors are guarded explicitly, not smoothed over


@dataclass
class AttentionResult:
    """Attention weights over tokens (sum to one) and the pooled d-vector."""

    alpha: np.ndarray
    pooled: np.ndarray


def compatibility(label_emb: np.ndarray, token_states: np.ndarray) -> np.ndarray:
    """K x T cosine compatibility between label rows and token states.

    Entries lie in [-1, 1]; any pairing involving an all-zero vector scores 0.
    """
    label_emb = np.asarray(label_emb, dtype=float)
    token_states = np.asarray(token_states, dtype=float)
    if label_emb.shape[1] != token_states.shape[1]:
        raise ValueError(
            f"dimension mismatch: label embeddings are {label_emb.shape[1]}-d, "
            f"token states are {token_states.shape[1]}-d"
        )
    label_norms = np.linalg.norm(label_emb, axis=1)
    token_norms = np.linalg.norm(token_states, axis=1)
    denom = np.outer(label_norms, token_norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        compat = (label_emb @ token_states.T) / denom
    compat[denom == 0.0] = 0.0
    return compat


def window_average(compat: np.ndarray, window: int) -> np.ndarray:
    """Uniform window smoothing along the token axis, zero-padded."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if window == 1:
        return compat
    reach = window // 2
    t = compat.shape[1]
    smoothed = np.zeros_like(compat)
    for offset in range(-reach, reach + 1):
        src_lo, src_hi = max(0, -offset), min(t, t - offset)
        dst_lo, dst_hi = max(0, offset), min(t, t + offset)
        smoothed[:, src_lo:src_hi] += compat[:, dst_lo:dst_hi]
    return smoothed / window


def attend(compat: np.ndarray, token_states: np.ndarray, window: int = 1) -> AttentionResult:
    """Pool token states by label-compatibility attention.

    Per-token scores take the maximum over labels of the window-smoothed
    compatibility column; a softmax over tokens yields the weights.
    """
    result, _ = attend_with_cache(compat, token_states, window)
    return result


@dataclass
class AttentionCache:
    smoothed: np.ndarray
    best_label: np.ndarray
    alpha: np.ndarray


def attend_with_cache(
    compat: np.ndarray, token_states: np.ndarray, window: int = 1
) -> tuple[AttentionResult, AttentionCache]:
    smoothed = window_average(np.asarray(compat, dtype=float), window)
    best_label = smoothed.argmax(axis=0)
    scores = smoothed[best_label, np.arange(smoothed.shape[1])]
    shifted = np.exp(scores - scores.max())
    alpha = shifted / shifted.sum()
    pooled = alpha @ np.asarray(token_states, dtype=float)
    return AttentionResult(alpha=alpha, pooled=pooled), AttentionCache(smoothed, best_label, alpha)


def attend_backward(
    d_alpha: np.ndarray,
    d_pooled: np.ndarray,
    cache: AttentionCache,
    token_states: np.ndarray,
    window: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of attend() outputs back to (compatibility, token states).

    The max over labels routes each token's score gradient to its best label
    row; the window smoothing spreads it back uniformly over the window.
    """
    alpha = cache.alpha
    d_alpha_total = d_alpha + token_states @ d_pooled
    d_token_states = np.outer(alpha, d_pooled)
    # softmax jacobian
    d_scores = alpha * (d_alpha_total - float(alpha @ d_alpha_total))
    d_smoothed = np.zeros_like(cache.smoothed)
    d_smoothed[cache.best_label, np.arange(d_scores.size)] = d_scores
    d_compat = _window_average_backward(d_smoothed, window)
    return d_compat, d_token_states


def _window_average_backward(d_smoothed: np.ndarray, window: int) -> np.ndarray:
    if window == 1:
        return d_smoothed
    reach = window // 2
    t = d_smoothed.shape[1]
    d_compat = np.zeros_like(d_smoothed)
    for offset in range(-reach, reach + 1):
        src_lo, src_hi = max(0, -offset), min(t, t - offset)
        dst_lo, dst_hi = max(0, offset), min(t, t + offset)
        d_compat[:, dst_lo:dst_hi] += d_smoothed[:, src_lo:src_hi]
    return d_compat / window


def compatibility_backward(
    label_emb: np.ndarray,
    token_states: np.ndarray,
    compat: np.ndarray,
    d_compat: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the cosine compatibility back to both operand matrices."""
    label_norms = np.linalg.norm(label_emb, axis=1)
    token_norms = np.linalg.norm(token_states, axis=1)
    denom = np.outer(label_norms, token_norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = d_compat / denom
    scaled[denom == 0.0] = 0.0  # guarded entries are constant zero

    weighted = d_compat * compat
    with np.errstate(divide="ignore", invalid="ignore"):
        label_shrink = weighted.sum(axis=1) / (label_norms * label_norms)
        token_shrink = weighted.sum(axis=0) / (token_norms * token_norms)
    label_shrink[label_norms == 0.0] = 0.0
    token_shrink[token_norms == 0.0] = 0.0

    d_label = scaled @ token_states - label_shrink[:, None] * label_emb
    d_tokens = scaled.T @ label_emb - token_shrink[:, None] * token_states
    return d_label, d_tokens

"""Core loss / similarity primitives shared by every training stage."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import NumericFault, Tensor

LOG_EPS = 1e-7  # clamp for log arguments; saturated probabilities are flagged


def softmax_rows(logits: Tensor) -> Tensor:
    """Row-wise softmax of a [n, V] logit matrix."""
    return T.softmax(logits, axis=-1)


def clamp_probs(scores: Tensor, eps: float = LOG_EPS) -> tuple[Tensor, bool]:
    """Clamp probabilities into [eps, 1-eps]; returns (clamped, was_clamped)."""
    lo = float(eps)
    hi = 1.0 - float(eps)
    clipped = np.clip(scores.data, lo, hi)
    was_clamped = bool((clipped != scores.data).any())
    if not was_clamped:
        return scores, False
    # straight-through clamp: gradient passes unchanged inside the interval
    delta = Tensor(clipped - scores.data)
    return T.add(scores, delta), True


def bce_original_loss(scores: Tensor, labels: np.ndarray,
                      mask: np.ndarray | None = None) -> Tensor:
    """Binary cross entropy against {0,1} labels, summed over positions.

    `scores` are post-sigmoid probabilities of "position holds the original
    word". Saturated scores are clamped at LOG_EPS rather than producing
    -inf. `mask` (same shape, {0,1}) excludes padding from the sum.
    """
    if np.isnan(scores.data).any():
        raise NumericFault("NaN in bce scores")
    labels = np.asarray(labels, dtype=scores.dtype)
    s, _ = clamp_probs(scores)
    term = T.add(
        T.mul(Tensor(labels), T.tlog(s)),
        T.mul(Tensor(1.0 - labels), T.tlog(T.add(1.0, T.mul_scalar(s, -1.0)))),
    )
    if mask is not None:
        term = T.mul(term, Tensor(np.asarray(mask, dtype=scores.dtype)))
    return T.mul_scalar(T.tsum(term), -1.0)


def cosine_sim(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    """Cosine similarity along `axis`; errors on zero vectors."""
    na = np.linalg.norm(a.data, axis=axis)
    nb = np.linalg.norm(b.data, axis=axis)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("cosine_sim of a zero vector is undefined")
    dot = T.tsum(T.mul(a, b), axis=axis)
    denom = T.mul(
        T.tsqrt(T.tsum(T.mul(a, a), axis=axis)),
        T.tsqrt(T.tsum(T.mul(b, b), axis=axis)),
    )
    return T.mul(dot, T.power(denom, -1.0))


def dot_sim(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    return T.tsum(T.mul(a, b), axis=axis)

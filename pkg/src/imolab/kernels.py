"""Numerical primitives shared by the classifiers and metrics.

All kernels accumulate in float64 regardless of input dtype, so vectorized
results can be compared meaningfully against scalar-loop references.
"""

from __future__ import annotations

import numpy as np

PROB_TOLERANCE = 1e-6
KL_EPSILON = 1e-12


def _as64(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def check_probability_rows(rows: np.ndarray, tol: float = PROB_TOLERANCE) -> None:
    """Validate that every row is a probability distribution."""
    r = _as64(np.atleast_2d(rows))
    if np.any(r < 0):
        raise ValueError("probability entries must be non-negative")
    sums = r.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValueError("probability rows must sum to 1")


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise dot products of two row-normalized matrices.

    Entry (i, j) is a_i . b_j; with unit rows this is the cosine similarity.
    """
    a64, b64 = _as64(a), _as64(b)
    if a64.ndim != 2 or b64.ndim != 2 or a64.shape[1] != b64.shape[1]:
        raise ValueError(f"dimension mismatch: {a64.shape} vs {b64.shape}")
    for name, m in (("a", a64), ("b", b64)):
        norms = np.linalg.norm(m, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-5):
            raise ValueError(f"matrix {name} is not row-normalized")
    return a64 @ b64.T


def affinity(sim: np.ndarray, beta: float) -> np.ndarray:
    """exp(-beta * (1 - sim)), the sharpened similarity used by cache scoring.

    beta controls sharpness; the output lies in (0, 1] for sim in [-1, 1].
    Similarities are clipped to the valid range to absorb float rounding;
    values beyond tolerance are rejected.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    s = _as64(sim)
    if np.any(s > 1.0 + 1e-6) or np.any(s < -1.0 - 1e-6):
        raise ValueError("similarities must lie in [-1, 1]")
    s = np.clip(s, -1.0, 1.0)
    return np.exp(-beta * (1.0 - s))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow stability."""
    z = _as64(np.atleast_2d(logits))
    if np.any(np.isnan(z)):
        raise ValueError("NaN in softmax input")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def kl_divergence(p: np.ndarray, q: np.ndarray, epsilon: float = KL_EPSILON) -> float:
    """sum_i p_i * ln(p_i / max(q_i, epsilon)), with 0 * ln(0/.) = 0.

    The floor is applied to q only; p entries of exactly zero contribute
    nothing, so one-hot p against strictly positive q stays finite.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p64, q64 = _as64(p).ravel(), _as64(q).ravel()
    if p64.shape != q64.shape:
        raise ValueError("length mismatch")
    check_probability_rows(p64)
    check_probability_rows(q64)
    q_floored = np.maximum(q64, epsilon)
    mask = p64 > 0
    return float(np.sum(p64[mask] * (np.log(p64[mask]) - np.log(q_floored[mask]))))


def kl_divergence_matrix(p_rows: np.ndarray, q_rows: np.ndarray,
                         epsilon: float = KL_EPSILON) -> np.ndarray:
    """KL(p_i || q_j) for every row pair; the (m, n) bridge matrix.

    Vectorized form of kl_divergence applied row-by-row, with the same
    epsilon floor on q.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p = _as64(np.atleast_2d(p_rows))
    q = _as64(np.atleast_2d(q_rows))
    if p.shape[1] != q.shape[1]:
        raise ValueError("length mismatch")
    check_probability_rows(p)
    check_probability_rows(q)
    log_q = np.log(np.maximum(q, epsilon))
    p_log_p = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0).sum(axis=1)
    return p_log_p[:, None] - p @ log_q.T


def minmax_rescale(values: np.ndarray, target_min: float,
                   target_max: float) -> tuple[np.ndarray, bool]:
    """Affine map of the global [min, max] onto [target_min, target_max].

    Order-preserving. Constant input cannot be rescaled; it maps to the
    target mid-point and the degenerate flag is set.
    """
    if not target_min < target_max:
        raise ValueError("target_min must be strictly below target_max")
    v = _as64(values)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        mid = (target_min + target_max) / 2.0
        return np.full_like(v, mid), True
    scale = (target_max - target_min) / (hi - lo)
    return target_min + (v - lo) * scale, False


def histogram(values: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    """Normalized bin frequencies over [lo, hi]; out-of-range values are clamped.

    Bin b covers [lo + b*w, lo + (b+1)*w) with the final bin closed at hi.
    Frequencies sum to 1.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if not lo < hi:
        raise ValueError("lo must be below hi")
    v = _as64(values).ravel()
    if v.size == 0:
        raise ValueError("empty input")
    v = np.clip(v, lo, hi)
    width = (hi - lo) / bins
    idx = np.minimum((np.floor((v - lo) / width)).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    return counts / counts.sum()

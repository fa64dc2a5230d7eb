"""Training-free prediction rules over embedding caches.

Every method combines a prompt-classifier ("clip") term computed in the
original embedding space with zero or more cache-side terms:

  zero-shot  logits = T W^T
  TA         + alpha * A V            A = exp(-beta (1 - T F^T))
  TX         + gamma * phi(-M) V      M = KL bridge through class distributions
  TA++/TX++  cache affinities computed in a second, adapted embedding space
  APE/APE++  cache affinities on a pruned channel subset, per-key reweighted

The clip term always uses the unpruned, unadapted space; adaptation and
channel pruning only ever touch the cache side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    affinity,
    cosine_matrix,
    kl_divergence_matrix,
    minmax_rescale,
    softmax_rows,
)
from .store import CacheModel, EmbeddingSet, TextClassifier

CE_FLOOR = 1e-12

METHODS = ("zero-shot", "TA", "TA++", "TX", "TX++", "APE", "APE++")


@dataclass(frozen=True)
class HyperParams:
    """Scalar knobs shared by the cache methods.

    alpha weighs the cache term against the clip term, beta sharpens the
    affinity exponent, gamma weighs the KL-bridge term, gamma_ape smooths
    the per-key reweighting, channel_budget and lambda_mix drive channel
    pruning (budget None means ceil(0.7 * d) at refinement time).
    """

    alpha: float = 1.0
    beta: float = 5.5
    gamma: float = 1.0
    gamma_ape: float = 1.0
    channel_budget: int | None = None
    lambda_mix: float = 0.7

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.gamma_ape < 0:
            raise ValueError("gamma_ape must be non-negative")
        if self.channel_budget is not None and self.channel_budget < 1:
            raise ValueError("channel_budget must be at least 1")
        if not 0.0 <= self.lambda_mix <= 1.0:
            raise ValueError("lambda_mix must lie in [0, 1]")

    def replace(self, **kw) -> "HyperParams":
        merged = {
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "gamma_ape": self.gamma_ape, "channel_budget": self.channel_budget,
            "lambda_mix": self.lambda_mix,
        }
        merged.update(kw)
        return HyperParams(**merged)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta, "gamma": self.gamma,
            "gamma_ape": self.gamma_ape, "channel_budget": self.channel_budget,
            "lambda_mix": self.lambda_mix,
        }


@dataclass
class LogitsBundle:
    """Per-query logits plus the audit trail of how they were produced."""

    logits: np.ndarray                 # (m, N) float64
    method: str
    hyperparams: HyperParams
    breakdown: dict[str, np.ndarray] | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("logits must be finite")
        if self.breakdown is not None:
            total = sum(self.breakdown.values())
            if not np.allclose(total, self.logits, atol=1e-6, rtol=0):
                raise ValueError("breakdown terms do not sum to the logits")

    @property
    def predictions(self) -> np.ndarray:
        # ties resolve to the lowest class index (np.argmax first occurrence)
        return np.argmax(self.logits, axis=1)


@dataclass(frozen=True)
class ChannelMask:
    """Retained channel indices after discriminativeness scoring."""

    indices: np.ndarray   # (Q,) int64, strictly increasing
    scores: np.ndarray    # (d,) float64, score of every channel

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("mask must retain at least one channel")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("mask indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= scores.size:
            raise ValueError("mask index out of range")
        idx.setflags(write=False)
        scores.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "scores", scores)

    @property
    def budget(self) -> int:
        return int(self.indices.size)


def _check_alignment(test: EmbeddingSet, w: TextClassifier,
                     cache: CacheModel | None = None) -> None:
    if test.dim != w.dim:
        raise ValueError(f"dimension mismatch: test d={test.dim}, classifier d={w.dim}")
    if test.num_classes != w.num_classes:
        raise ValueError("class count mismatch between test set and classifier")
    if not test.normalized:
        raise ValueError("test embeddings must be normalized")
    if cache is not None:
        if cache.dim != test.dim:
            raise ValueError("cache dimension mismatch")
        if cache.num_classes != w.num_classes:
            raise ValueError("cache class count mismatch")


def clip_logits(test: EmbeddingSet, w: TextClassifier,
                hp: HyperParams | None = None) -> LogitsBundle:
    """Zero-shot logits: query embeddings against the prompt classifier."""
    hp = hp or HyperParams()
    _check_alignment(test, w)
    logits = cosine_matrix(test.vectors, w.weights)
    return LogitsBundle(logits=logits, method="zero-shot", hyperparams=hp,
                        breakdown={"clip": logits.copy()})


def tip_adapter_logits(test: EmbeddingSet, cache: CacheModel, w: TextClassifier,
                       hp: HyperParams) -> LogitsBundle:
    """Clip term plus alpha-weighted cache votes."""
    _check_alignment(test, w, cache)
    clip = cosine_matrix(test.vectors, w.weights)
    a = affinity(cosine_matrix(test.vectors, cache.keys), hp.beta)
    cache_term = hp.alpha * (a @ cache.values.astype(np.float64))
    return LogitsBundle(
        logits=cache_term + clip, method="TA", hyperparams=hp,
        breakdown={"clip": clip, "cache": cache_term},
    )


def _kl_bridge(test_vectors: np.ndarray, train_keys: np.ndarray,
               w: TextClassifier) -> np.ndarray:
    """Bridge matrix M: KL between test and train class distributions."""
    s_test = softmax_rows(cosine_matrix(test_vectors, w.weights))
    s_train = softmax_rows(cosine_matrix(train_keys, w.weights))
    return kl_divergence_matrix(s_test, s_train)


def _bridge_term(m: np.ndarray, a: np.ndarray, values: np.ndarray,
                 gamma: float) -> tuple[np.ndarray, dict]:
    """gamma-weighted votes from -M rescaled onto the affinity range."""
    lo, hi = float(a.min()), float(a.max())
    if lo == hi:
        phi = np.full_like(m, lo)
        degenerate = True
    else:
        phi, degenerate = minmax_rescale(-m, lo, hi)
    term = gamma * (phi @ values.astype(np.float64))
    extras = {"rescale_min": lo, "rescale_max": hi, "degenerate_rescale": degenerate}
    return term, extras


def tip_x_logits(test: EmbeddingSet, cache: CacheModel, w: TextClassifier,
                 hp: HyperParams) -> LogitsBundle:
    """Cache votes plus a KL bridge through the class-probability space.

    The bridge matrix is rescaled onto the batch-global [min, max] of the
    affinity matrix so both cache-side terms share one range; the range
    used is recorded in the bundle extras.
    """
    _check_alignment(test, w, cache)
    clip = cosine_matrix(test.vectors, w.weights)
    a = affinity(cosine_matrix(test.vectors, cache.keys), hp.beta)
    values64 = cache.values.astype(np.float64)
    cache_term = hp.alpha * (a @ values64)
    m = _kl_bridge(test.vectors, cache.keys, w)
    bridge, extras = _bridge_term(m, a, cache.values, hp.gamma)
    return LogitsBundle(
        logits=(clip + cache_term) + bridge, method="TX", hyperparams=hp,
        breakdown={"clip": clip, "cache": cache_term, "kl_bridge": bridge},
        extras=extras,
    )


def plusplus_logits(test_orig: EmbeddingSet, test_adapted: EmbeddingSet,
                    cache_adapted: CacheModel, w: TextClassifier,
                    hp: HyperParams, variant: str,
                    cache_orig: CacheModel | None = None) -> LogitsBundle:
    """TA++/TX++: cache affinities in the adapted space, clip term untouched.

    test_orig and test_adapted must be row-aligned encodings of the same
    items. The TX++ bridge stays in the original space, so it needs the
    original-space cache built from the same shot rows (cache_orig).
    """
    if variant not in ("TA++", "TX++"):
        raise ValueError(f"unknown variant {variant!r}")
    if test_orig.rows != test_adapted.rows:
        raise ValueError("original and adapted test sets must be row-aligned")
    if not np.array_equal(test_orig.labels, test_adapted.labels):
        raise ValueError("original and adapted test labels disagree")
    _check_alignment(test_orig, w)
    if not test_adapted.normalized:
        raise ValueError("adapted test embeddings must be normalized")
    if cache_adapted.dim != test_adapted.dim:
        raise ValueError("adapted cache dimension mismatch")
    if cache_adapted.num_classes != w.num_classes:
        raise ValueError("adapted cache class count mismatch")

    clip = cosine_matrix(test_orig.vectors, w.weights)
    y = affinity(cosine_matrix(test_adapted.vectors, cache_adapted.keys), hp.beta)
    values64 = cache_adapted.values.astype(np.float64)
    cache_term = hp.alpha * (y @ values64)

    if variant == "TA++":
        return LogitsBundle(
            logits=cache_term + clip, method="TA++", hyperparams=hp,
            breakdown={"clip": clip, "cache": cache_term},
        )

    if cache_orig is None:
        raise ValueError("TX++ requires the original-space cache for the KL bridge")
    if cache_orig.dim != test_orig.dim or cache_orig.shots != cache_adapted.shots:
        raise ValueError("original cache does not match the adapted cache")
    if not np.array_equal(cache_orig.values, cache_adapted.values):
        raise ValueError("original and adapted caches must hold the same rows")
    m = _kl_bridge(test_orig.vectors, cache_orig.keys, w)
    bridge, extras = _bridge_term(m, y, cache_adapted.values, hp.gamma)
    return LogitsBundle(
        logits=(clip + cache_term) + bridge, method="TX++", hyperparams=hp,
        breakdown={"clip": clip, "cache": cache_term, "kl_bridge": bridge},
        extras=extras,
    )


def ape_refine(w: TextClassifier, hp: HyperParams) -> ChannelMask:
    """Score channels by class variance vs inter-class similarity, keep the top Q.

    var_c is the population variance of channel c across the classifier
    rows; sim_c is the channel's mean contribution to inter-class dot
    products, sum_{i != j} W_ic W_jc / (N (N-1)). Scores mix the two as
    population z-scores: lambda * z(var) - (1 - lambda) * z(sim). Ties break
    toward the lower channel index.
    """
    d = w.dim
    q = hp.channel_budget if hp.channel_budget is not None else math.ceil(0.7 * d)
    if q > d:
        raise ValueError(f"channel budget {q} exceeds dimension {d}")
    weights = w.weights.astype(np.float64)
    n = w.num_classes

    var = weights.var(axis=0)
    col_sum = weights.sum(axis=0)
    col_sq = (weights ** 2).sum(axis=0)
    if n > 1:
        sim = (col_sum ** 2 - col_sq) / (n * (n - 1))
    else:
        sim = np.zeros(d)

    def zscore(x: np.ndarray) -> np.ndarray:
        std = x.std()
        if std == 0.0:
            return np.zeros_like(x)
        return (x - x.mean()) / std

    scores = hp.lambda_mix * zscore(var) - (1.0 - hp.lambda_mix) * zscore(sim)
    order = np.lexsort((np.arange(d), -scores))
    retained = np.sort(order[:q])
    return ChannelMask(indices=retained, scores=scores)


def _mask_and_renormalize(matrix: np.ndarray, mask: ChannelMask) -> np.ndarray:
    sub = matrix.astype(np.float64)[:, mask.indices]
    norms = np.linalg.norm(sub, axis=1, keepdims=True)
    if np.any(norms < 1e-9):
        raise ValueError("channel mask zeroes out a row; cannot renormalize")
    return sub / norms


def ape_logits(test: EmbeddingSet, cache: CacheModel, w: TextClassifier,
               hp: HyperParams, mask: ChannelMask,
               corrected_cache: CacheModel | None = None,
               test_adapted: EmbeddingSet | None = None) -> LogitsBundle:
    """Pruned-channel cache scoring with per-key confidence reweighting.

    Each cache key k is weighted by exp(gamma_ape * CE_k) where CE_k is the
    cross-entropy of the pruned-space class prediction for that key against
    its own label (the finite form of one-hot KL); keys the prompt
    classifier already gets right contribute less. With corrected inputs the
    affinity side moves to the adapted space (APE++); the reweighting always
    uses the original-space cache. The clip term stays unpruned.
    """
    _check_alignment(test, w, cache)
    if mask.scores.size != w.dim:
        raise ValueError("mask was built for a different dimension")
    if (corrected_cache is None) != (test_adapted is None):
        raise ValueError("APE++ needs both the corrected cache and the adapted test set")

    w_ref = _mask_and_renormalize(w.weights, mask)
    keys_ref = _mask_and_renormalize(cache.keys, mask)

    probs = softmax_rows(keys_ref @ w_ref.T)
    key_labels = cache.labels
    p_true = np.maximum(probs[np.arange(probs.shape[0]), key_labels], CE_FLOOR)
    ape_weights = np.exp(hp.gamma_ape * (-np.log(p_true)))

    if corrected_cache is not None:
        if corrected_cache.num_classes != cache.num_classes \
                or corrected_cache.shots != cache.shots:
            raise ValueError("corrected cache does not match the original cache")
        if not np.array_equal(corrected_cache.values, cache.values):
            raise ValueError("corrected cache must hold the same rows as the original")
        if test_adapted.rows != test.rows:
            raise ValueError("adapted test set must be row-aligned with the original")
        query_ref = _mask_and_renormalize(test_adapted.vectors, mask)
        aff_keys = _mask_and_renormalize(corrected_cache.keys, mask)
        method = "APE++"
    else:
        query_ref = _mask_and_renormalize(test.vectors, mask)
        aff_keys = keys_ref
        method = "APE"

    a_ref = affinity(query_ref @ aff_keys.T, hp.beta)
    weighted_values = ape_weights[:, None] * cache.values.astype(np.float64)
    cache_term = hp.alpha * (a_ref @ weighted_values)
    clip = cosine_matrix(test.vectors, w.weights)
    return LogitsBundle(
        logits=clip + cache_term, method=method, hyperparams=hp,
        breakdown={"clip": clip, "cache": cache_term},
        extras={"ape_weights": ape_weights, "mask_budget": mask.budget},
    )

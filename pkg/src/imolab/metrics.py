"""Measurement toolkit: similarity-overlap area, domain divergence, variance.

The overlap metric compares the cosine-similarity distribution of same-class
("paired") embedding pairs against different-class ("unpaired") pairs; the
histogram intersection area quantifies how much the two distributions
coincide. Domain divergence is estimated from the held-out error of a linear
classifier trained to separate two embedding sets.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import histogram
from .store import EmbeddingSet

DEFAULT_BINS = 200
DEFAULT_PAIR_BUDGET = 10_000   # per side, split across classes
DEFAULT_LOW_VARIANCE = 0.0005


@dataclass(frozen=True)
class ImoReport:
    """Histogram pair and intersection area of same- vs different-class similarities."""

    paired_hist: np.ndarray
    unpaired_hist: np.ndarray
    intersection_area: float
    pairs_sampled: dict[str, int]
    bins: int
    seed: int

    def __post_init__(self):
        for hist in (self.paired_hist, self.unpaired_hist):
            if abs(float(hist.sum()) - 1.0) > 1e-6:
                raise ValueError("histograms must sum to 1")
        expected = float(np.minimum(self.paired_hist, self.unpaired_hist).sum())
        if self.intersection_area != expected:
            raise ValueError("intersection_area must equal the min-sum of the histograms")

    def to_dict(self) -> dict:
        return {
            "paired_hist": [float(x) for x in self.paired_hist],
            "unpaired_hist": [float(x) for x in self.unpaired_hist],
            "intersection_area": float(self.intersection_area),
            "pairs_sampled": dict(self.pairs_sampled),
            "bins": self.bins,
            "seed": self.seed,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    def to_csv(self, path: str | Path) -> None:
        """Bin centers and densities, for external plotting."""
        width = 2.0 / self.bins
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["bin_center", "paired_density", "unpaired_density"])
            for b in range(self.bins):
                center = -1.0 + (b + 0.5) * width
                out.writerow([f"{center:.6f}",
                              repr(float(self.paired_hist[b])),
                              repr(float(self.unpaired_hist[b]))])


@dataclass(frozen=True)
class PadReport:
    """Domain-classifier error and the divergence score derived from it."""

    epsilon: float
    pad: float
    train_size: int
    test_size: int
    seed: int
    iterations: int

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        expected = max(0.0, 2.0 * (1.0 - 2.0 * self.epsilon))
        if self.pad != expected:
            raise ValueError("pad must equal max(0, 2*(1 - 2*epsilon))")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "pad": self.pad,
            "train_size": self.train_size, "test_size": self.test_size,
            "seed": self.seed, "iterations": self.iterations,
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")


def imo_intersection(es: EmbeddingSet, pairs_per_class: int | None = None,
                     bins: int = DEFAULT_BINS, seed: int = 0) -> ImoReport:
    """Intersection area between paired and unpaired similarity histograms.

    Same-class pairs are sampled per class, without replacement, up to
    pairs_per_class each (default: a 10k budget split evenly across
    classes). An equal number of different-class pairs is then drawn.
    Similarities are accumulated in float64 and binned over [-1, 1].
    """
    if not es.normalized:
        raise ValueError("overlap measurement requires normalized embeddings")
    if es.num_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    labels = es.labels
    vectors = es.vectors.astype(np.float64)

    if pairs_per_class is None:
        pairs_per_class = max(1, -(-DEFAULT_PAIR_BUDGET // es.num_classes))
    if pairs_per_class < 1:
        raise ValueError("pairs_per_class must be positive")

    paired_i: list[np.ndarray] = []
    paired_j: list[np.ndarray] = []
    for c in range(es.num_classes):
        rows = np.flatnonzero(labels == c)
        n = rows.size
        available = n * (n - 1) // 2
        if available == 0:
            continue
        iu = np.triu_indices(n, k=1)
        take = min(pairs_per_class, available)
        if take < available:
            codes = rng.choice(available, size=take, replace=False)
        else:
            codes = np.arange(available)
        paired_i.append(rows[iu[0][codes]])
        paired_j.append(rows[iu[1][codes]])
    if not paired_i:
        raise ValueError("no same-class pair exists")
    pi = np.concatenate(paired_i)
    pj = np.concatenate(paired_j)
    total = pi.size

    # different-class pairs: enumerate when small, otherwise rejection-sample
    if es.rows <= 2048:
        iu = np.triu_indices(es.rows, k=1)
        diff = labels[iu[0]] != labels[iu[1]]
        ui_all, uj_all = iu[0][diff], iu[1][diff]
        if ui_all.size == 0:
            raise ValueError("no different-class pair exists")
        take = min(total, ui_all.size)
        codes = rng.choice(ui_all.size, size=take, replace=False)
        ui, uj = ui_all[codes], uj_all[codes]
    else:
        seen: set[tuple[int, int]] = set()
        ui_list: list[int] = []
        uj_list: list[int] = []
        while len(ui_list) < total:
            cand_i = rng.integers(0, es.rows, size=4 * total)
            cand_j = rng.integers(0, es.rows, size=4 * total)
            for a, b in zip(cand_i, cand_j):
                if a == b or labels[a] == labels[b]:
                    continue
                key = (int(min(a, b)), int(max(a, b)))
                if key in seen:
                    continue
                seen.add(key)
                ui_list.append(key[0])
                uj_list.append(key[1])
                if len(ui_list) == total:
                    break
        ui, uj = np.asarray(ui_list), np.asarray(uj_list)

    paired_sims = np.einsum("ij,ij->i", vectors[pi], vectors[pj])
    unpaired_sims = np.einsum("ij,ij->i", vectors[ui], vectors[uj])
    paired_hist = histogram(paired_sims, -1.0, 1.0, bins)
    unpaired_hist = histogram(unpaired_sims, -1.0, 1.0, bins)
    area = float(np.minimum(paired_hist, unpaired_hist).sum())
    return ImoReport(
        paired_hist=paired_hist, unpaired_hist=unpaired_hist,
        intersection_area=area,
        pairs_sampled={"paired": int(total), "unpaired": int(ui.size)},
        bins=bins, seed=seed,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def proxy_a_distance(source: EmbeddingSet, target: EmbeddingSet, seed: int = 0,
                     loss: str = "logistic", lambda_reg: float = 1e-3,
                     iterations: int = 500, step: float = 0.1) -> PadReport:
    """Domain divergence from a linear domain classifier's held-out error.

    The two sets are balanced by subsampling the larger side, split 80/20
    per domain, and a regularized linear classifier (logistic by default,
    hinge behind the flag) is fit by full-batch gradient descent from zero
    init. PAD = max(0, 2 * (1 - 2 * error)).
    """
    if source.dim != target.dim:
        raise ValueError("source and target dimensions differ")
    if source.rows < 20 or target.rows < 20:
        raise ValueError("each domain needs at least 20 rows")
    if loss not in ("logistic", "hinge"):
        raise ValueError('loss must be "logistic" or "hinge"')
    rng = np.random.default_rng(seed)

    m = min(source.rows, target.rows)
    xs = source.vectors.astype(np.float64)
    xt = target.vectors.astype(np.float64)
    if source.rows > m:
        xs = xs[np.sort(rng.choice(source.rows, size=m, replace=False))]
    if target.rows > m:
        xt = xt[np.sort(rng.choice(target.rows, size=m, replace=False))]

    split = int(0.8 * m)
    perm_s, perm_t = rng.permutation(m), rng.permutation(m)
    xs_tr, xs_te = xs[perm_s[:split]], xs[perm_s[split:]]
    xt_tr, xt_te = xt[perm_t[:split]], xt[perm_t[split:]]

    x_tr = np.vstack([xs_tr, xt_tr])
    y_tr = np.concatenate([-np.ones(len(xs_tr)), np.ones(len(xt_tr))])
    x_te = np.vstack([xs_te, xt_te])
    y_te = np.concatenate([-np.ones(len(xs_te)), np.ones(len(xt_te))])

    # bias column last; the bias stays unregularized
    x_tr_b = np.hstack([x_tr, np.ones((len(x_tr), 1))])
    x_te_b = np.hstack([x_te, np.ones((len(x_te), 1))])
    w = np.zeros(x_tr_b.shape[1])
    n = len(x_tr_b)
    for _ in range(iterations):
        margins = y_tr * (x_tr_b @ w)
        if loss == "logistic":
            coeff = -y_tr * _sigmoid(-margins)
        else:
            coeff = -y_tr * (margins < 1.0)
        grad = (x_tr_b.T @ coeff) / n
        grad[:-1] += lambda_reg * w[:-1]
        w = w - step * grad

    scores = x_te_b @ w
    preds = np.where(scores >= 0, 1.0, -1.0)
    epsilon = float(np.mean(preds != y_te))
    pad = max(0.0, 2.0 * (1.0 - 2.0 * epsilon))
    return PadReport(epsilon=epsilon, pad=pad, train_size=int(n),
                     test_size=int(len(x_te_b)), seed=seed, iterations=iterations)


def feature_variance(es: EmbeddingSet, low_threshold: float = DEFAULT_LOW_VARIANCE
                     ) -> tuple[np.ndarray, float]:
    """Per-dimension population variance and the fraction below the threshold."""
    if es.rows < 2:
        raise ValueError("variance needs at least 2 rows")
    variances = es.vectors.astype(np.float64).var(axis=0)
    fraction = float(np.mean(variances < low_threshold))
    return variances, fraction


def export_features_csv(es: EmbeddingSet, path: str | Path) -> None:
    """Dump label + feature columns for external projection/plotting tools."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["label"] + [f"f{i}" for i in range(es.dim)])
        for row, label in zip(es.vectors, es.labels):
            out.writerow([int(label)] + [repr(float(x)) for x in row])


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation coefficient of two equal-length samples."""
    xv = np.asarray(x, dtype=np.float64).ravel()
    yv = np.asarray(y, dtype=np.float64).ravel()
    if xv.shape != yv.shape:
        raise ValueError("length mismatch")
    if xv.size < 3:
        raise ValueError("need at least 3 points")
    xc, yc = xv - xv.mean(), yv - yv.mean()
    denom = np.sqrt((xc ** 2).sum() * (yc ** 2).sum())
    if denom == 0.0:
        raise ValueError("constant input")
    return float((xc * yc).sum() / denom)

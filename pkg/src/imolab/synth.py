"""Seeded generator of directional embedding datasets with tunable overlap.

Class geometry is controlled by three knobs: rho spreads the class centers
over the unit sphere, kappa concentrates items around their center (higher
kappa means tighter clusters and lower paired/unpaired overlap), and tau
perturbs the classifier rows away from the true centers.

Items are built by Gaussian-perturb-then-normalize rather than exact
von Mises-Fisher sampling: v = normalize(center + eps / kappa). Paired
generation reuses the same per-item eps with a larger kappa, so row i of
the original and adapted outputs depicts the same underlying item under a
better-concentrated encoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .store import (
    EmbeddingSet,
    TextClassifier,
    l2_normalize,
    write_embedding_set,
    write_manifest,
)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int
    per_class: tuple[int, int, int]   # items per class for train/val/test
    dim: int
    kappa: float
    rho: float = 1.0
    tau: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.dim < 2:
            raise ValueError("need at least 2 dimensions")
        if len(self.per_class) != 3 or any(n < 1 for n in self.per_class):
            raise ValueError("per_class must give positive train/val/test counts")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")


@dataclass(frozen=True)
class SynthBundle:
    train: EmbeddingSet
    val: EmbeddingSet
    test: EmbeddingSet
    weights: TextClassifier

    def split(self, name: str) -> EmbeddingSet:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _build_sets(spec: SynthSpec, kappa_adapted: float | None
                ) -> tuple[SynthBundle, SynthBundle | None]:
    """Single draw pass; fixed order: base, centers, W noise, then per-split latents."""
    rng = np.random.default_rng(spec.seed)
    n, d = spec.num_classes, spec.dim

    base = _unit(rng.standard_normal(d))
    centers = np.empty((n, d))
    for c in range(n):
        direction = _unit(rng.standard_normal(d))
        centers[c] = _unit((1.0 - spec.rho) * base + spec.rho * direction)

    w_noise = rng.standard_normal((n, d))
    weights = l2_normalize(centers + spec.tau * w_noise)
    names = tuple(f"class_{c:03d}" for c in range(n))
    classifier = TextClassifier(weights=weights, class_names=names)

    orig_splits: dict[str, EmbeddingSet] = {}
    adapted_splits: dict[str, EmbeddingSet] = {}
    for split, count in zip(SPLITS, spec.per_class):
        latents = rng.standard_normal((n, count, d))
        labels = np.repeat(np.arange(n), count)
        raw = centers[:, None, :] + latents / spec.kappa
        vectors = l2_normalize(raw.reshape(n * count, d))
        orig_splits[split] = EmbeddingSet(
            vectors=vectors, labels=labels, class_names=names, normalized=True)
        if kappa_adapted is not None:
            raw_a = centers[:, None, :] + latents / kappa_adapted
            vectors_a = l2_normalize(raw_a.reshape(n * count, d))
            adapted_splits[split] = EmbeddingSet(
                vectors=vectors_a, labels=labels, class_names=names, normalized=True)

    original = SynthBundle(weights=classifier, **orig_splits)
    adapted = SynthBundle(weights=classifier, **adapted_splits) if kappa_adapted else None
    return original, adapted


def generate(spec: SynthSpec) -> SynthBundle:
    """Deterministic train/val/test sets plus an aligned classifier matrix."""
    bundle, _ = _build_sets(spec, None)
    return bundle


def generate_pair(spec: SynthSpec, kappa_adapted: float
                  ) -> tuple[SynthBundle, SynthBundle]:
    """Row-aligned original and adapted bundles sharing one classifier.

    The adapted side must be strictly more concentrated (kappa_adapted >
    kappa); it reuses the original per-item latent draws, so labels and row
    order match exactly.
    """
    if kappa_adapted <= spec.kappa:
        raise ValueError("kappa_adapted must exceed kappa")
    original, adapted = _build_sets(spec, kappa_adapted)
    assert adapted is not None
    return original, adapted


def classifier_as_set(classifier: TextClassifier) -> EmbeddingSet:
    """Classifier matrix in embedding-set form, one labeled row per class."""
    return EmbeddingSet(
        vectors=classifier.weights,
        labels=np.arange(classifier.num_classes),
        class_names=classifier.class_names,
        normalized=True,
    )


def save_bundle(bundle: SynthBundle, out_dir: str | Path, source: str,
                encoder: str = "original", suffix: str = "") -> dict[str, Path]:
    """Write the bundle's splits and classifier as IMOE files with manifests."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for split in SPLITS:
        path = out / f"{split}{suffix}.imoe"
        write_embedding_set(bundle.split(split), path)
        write_manifest(path, source=f"{source} [{split}]", encoder=encoder)
        written[split] = path
    if not suffix:
        path = out / "text_weights.imoe"
        write_embedding_set(classifier_as_set(bundle.weights), path)
        write_manifest(path, source=f"{source} [text classifier]", encoder="original")
        written["text_weights"] = path
    return written

"""Experimental protocol: shot sampling, grid search, accuracy tables, studies.

A run evaluates every configured (method, shot, seed) cell on the test
split: shots are sampled from the training split with a portable PRNG,
caches are built in the original and (when available) adapted spaces, and
hyperparameters come either from the config or from an exhaustive grid
search on the validation split. Reports serialize canonically so identical
configs produce byte-identical output at any worker count.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import (
    METHODS,
    HyperParams,
    LogitsBundle,
    ape_logits,
    ape_refine,
    clip_logits,
    plusplus_logits,
    tip_adapter_logits,
    tip_x_logits,
)
from .kernels import (
    affinity,
    cosine_matrix,
    kl_divergence_matrix,
    minmax_rescale,
    softmax_rows,
)
from .metrics import feature_variance, imo_intersection, pearson
from .rng import Xorshift64Star
from .store import (
    CacheModel,
    EmbeddingSet,
    TextClassifier,
    build_cache,
    read_embedding_set,
    sha256_of_file,
    text_classifier_from_set,
)

DELTA_PAIRS = (("TA++", "TA"), ("TX++", "TX"), ("APE++", "APE"))

DEFAULT_ALPHA_GRID = [round(0.25 * i, 2) for i in range(21)]        # 0 .. 5
DEFAULT_BETA_GRID = [round(1.0 + 0.5 * i, 1) for i in range(19)]    # 1 .. 10
DEFAULT_GAMMA_GRID = [round(0.25 * i, 2) for i in range(21)]        # 0 .. 5

_PLUSPLUS = ("TA++", "TX++", "APE++")


def sample_shots(train: EmbeddingSet, k: int, seed: int) -> np.ndarray:
    """Select k training rows per class, without replacement.

    Uses the portable xorshift stream (see rng module) over classes in index
    order, so the selection is identical on every platform. Within each
    class the chosen indices are returned ascending; classes are
    concatenated class-major.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    stream = Xorshift64Star(seed)
    out: list[int] = []
    for c in range(train.num_classes):
        rows = train.class_rows(c)
        if rows.size < k:
            raise ValueError(f"class {c} has only {rows.size} items, needs {k}")
        picked = stream.sample_without_replacement([int(r) for r in rows], k)
        out.extend(sorted(picked))
    return np.asarray(out, dtype=np.int64)


def accuracy(logits: LogitsBundle | np.ndarray, labels: np.ndarray) -> float:
    """Percent of rows whose argmax matches the label; ties go to the lowest index."""
    arr = logits.logits if isinstance(logits, LogitsBundle) else np.asarray(logits)
    labels = np.asarray(labels)
    if arr.shape[0] != labels.shape[0]:
        raise ValueError("row count mismatch between logits and labels")
    predictions = np.argmax(arr, axis=1)
    return float(100.0 * np.count_nonzero(predictions == labels) / labels.shape[0])


@dataclass(frozen=True)
class SearchGrids:
    alpha: tuple[float, ...] = tuple(DEFAULT_ALPHA_GRID)
    beta: tuple[float, ...] = tuple(DEFAULT_BETA_GRID)
    gamma: tuple[float, ...] = tuple(DEFAULT_GAMMA_GRID)

    def __post_init__(self):
        if not self.alpha or not self.beta or not self.gamma:
            raise ValueError("grids must be non-empty")


def method_logits(method: str, hp: HyperParams, *, test: EmbeddingSet,
                  cache: CacheModel | None, w: TextClassifier,
                  test_adapted: EmbeddingSet | None = None,
                  cache_adapted: CacheModel | None = None) -> LogitsBundle:
    """Dispatch one prediction rule with the right spaces wired in."""
    if method == "zero-shot":
        return clip_logits(test, w, hp)
    if cache is None:
        raise ValueError(f"method {method} requires a cache")
    if method == "TA":
        return tip_adapter_logits(test, cache, w, hp)
    if method == "TX":
        return tip_x_logits(test, cache, w, hp)
    if method in ("TA++", "TX++"):
        if test_adapted is None or cache_adapted is None:
            raise ValueError(f"method {method} requires adapted embeddings")
        return plusplus_logits(test, test_adapted, cache_adapted, w, hp,
                               variant=method, cache_orig=cache)
    if method == "APE":
        return ape_logits(test, cache, w, hp, ape_refine(w, hp))
    if method == "APE++":
        if test_adapted is None or cache_adapted is None:
            raise ValueError("method APE++ requires adapted embeddings")
        return ape_logits(test, cache, w, hp, ape_refine(w, hp),
                          corrected_cache=cache_adapted, test_adapted=test_adapted)
    raise ValueError(f"unknown method {method!r}")


def grid_search(method: str, val: EmbeddingSet, cache: CacheModel | None,
                w: TextClassifier, grids: SearchGrids, base_hp: HyperParams,
                val_adapted: EmbeddingSet | None = None,
                cache_adapted: CacheModel | None = None
                ) -> tuple[HyperParams, float]:
    """Exhaustive validation-accuracy search over the method's grid axes.

    Ties break toward the lexicographically smaller (alpha, beta, gamma).
    Methods without a bridge term only sweep alpha and beta; the cache term
    is linear in alpha, so per beta one raw term serves the whole alpha row.
    """
    if method == "zero-shot":
        return base_hp, accuracy(clip_logits(val, w, base_hp), val.labels)
    if cache is None:
        raise ValueError(f"method {method} requires a cache")

    uses_bridge = method in ("TX", "TX++")
    uses_ape = method in ("APE", "APE++")
    if method in _PLUSPLUS and (val_adapted is None or cache_adapted is None):
        raise ValueError(f"method {method} requires adapted validation embeddings")

    clip = cosine_matrix(val.vectors, w.weights)
    labels = val.labels

    sim = None
    values64 = None
    mask = None
    if uses_ape:
        mask = ape_refine(w, base_hp)
    else:
        query = val_adapted if method in _PLUSPLUS else val
        keys = cache_adapted if method in _PLUSPLUS else cache
        sim = cosine_matrix(query.vectors, keys.keys)
        values64 = keys.values.astype(np.float64)

    bridge_m = None
    bridge_values = None
    if uses_bridge:
        # the bridge always stays in the original space
        s_val = softmax_rows(clip)
        s_train = softmax_rows(cosine_matrix(cache.keys, w.weights))
        bridge_m = kl_divergence_matrix(s_val, s_train)
        bridge_values = cache.values.astype(np.float64)

    best_acc = -1.0
    best_tuple: tuple[float, float, float] | None = None
    gammas = grids.gamma if uses_bridge else (base_hp.gamma,)

    for beta in grids.beta:
        if uses_ape:
            probe = ape_logits(
                val, cache, w, base_hp.replace(alpha=1.0, beta=beta), mask,
                corrected_cache=cache_adapted if method == "APE++" else None,
                test_adapted=val_adapted if method == "APE++" else None)
            raw_cache = probe.breakdown["cache"]
            bridge_raw = None
        else:
            aff = affinity(sim, beta)
            raw_cache = aff @ values64
            if uses_bridge:
                lo, hi = float(aff.min()), float(aff.max())
                if lo == hi:
                    phi = np.full_like(bridge_m, lo)
                else:
                    phi, _ = minmax_rescale(-bridge_m, lo, hi)
                bridge_raw = phi @ bridge_values
            else:
                bridge_raw = None
        for gamma in gammas:
            base_logits = clip if bridge_raw is None else clip + gamma * bridge_raw
            for alpha in grids.alpha:
                acc = accuracy(base_logits + alpha * raw_cache, labels)
                key = (float(alpha), float(beta), float(gamma))
                if acc > best_acc or (acc == best_acc and key < best_tuple):
                    best_acc = acc
                    best_tuple = key

    chosen = base_hp.replace(alpha=best_tuple[0], beta=best_tuple[1],
                             gamma=best_tuple[2])
    return chosen, best_acc


@dataclass
class ExperimentConfig:
    """Everything a run needs: file paths, method list, grids, seeds."""

    dataset: str
    paths: dict[str, str]
    methods: list[str] = field(default_factory=lambda: ["zero-shot", "TA"])
    shots: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    search: bool = True
    alpha_grid: list[float] = field(default_factory=lambda: list(DEFAULT_ALPHA_GRID))
    beta_grid: list[float] = field(default_factory=lambda: list(DEFAULT_BETA_GRID))
    gamma_grid: list[float] = field(default_factory=lambda: list(DEFAULT_GAMMA_GRID))
    hyperparams: HyperParams = field(default_factory=HyperParams)
    attach_metrics: bool = False

    REQUIRED_PATHS = ("train", "val", "test", "text_weights")
    ADAPTED_PATHS = ("train_adapted", "val_adapted", "test_adapted")

    def validate(self) -> None:
        if not self.methods:
            raise ValueError("method list is empty")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if not self.shots or any(s < 1 for s in self.shots):
            raise ValueError("shots must be positive")
        if not self.seeds:
            raise ValueError("seed list is empty")
        if not self.alpha_grid or not self.beta_grid or not self.gamma_grid:
            raise ValueError("hyperparameter grids must be non-empty")
        for key in self.REQUIRED_PATHS:
            if key not in self.paths:
                raise ValueError(f"missing path {key!r}")
        if any(m in _PLUSPLUS for m in self.methods):
            for key in self.ADAPTED_PATHS:
                if key not in self.paths:
                    raise ValueError(
                        f"method list includes a ++ variant but path {key!r} is missing")
        for key, value in self.paths.items():
            if not Path(value).exists():
                raise ValueError(f"path {key!r} does not exist: {value}")

    def grids(self) -> SearchGrids:
        return SearchGrids(alpha=tuple(self.alpha_grid), beta=tuple(self.beta_grid),
                           gamma=tuple(self.gamma_grid))

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "paths": dict(sorted(self.paths.items())),
            "methods": list(self.methods),
            "shots": list(self.shots),
            "seeds": list(self.seeds),
            "search": self.search,
            "alpha_grid": [float(a) for a in self.alpha_grid],
            "beta_grid": [float(b) for b in self.beta_grid],
            "gamma_grid": [float(g) for g in self.gamma_grid],
            "hyperparams": self.hyperparams.to_dict(),
            "attach_metrics": self.attach_metrics,
        }

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path | None = None) -> "ExperimentConfig":
        data = dict(data)
        hp = data.pop("hyperparams", None)
        paths = dict(data.pop("paths"))
        if base_dir is not None:
            paths = {k: str(Path(base_dir) / v) for k, v in paths.items()}
        cfg = cls(paths=paths, **data)
        if hp is not None:
            cfg.hyperparams = HyperParams(**hp)
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class EvalReport:
    """Per-cell accuracies plus deterministic aggregates and provenance."""

    dataset: str
    methods: list[str]
    shots: list[int]
    seeds: list[int]
    accuracies: dict[str, dict[str, dict[str, float]]]
    per_shot: dict[str, dict[str, float]]
    per_method: dict[str, float]
    deltas: dict[str, float]
    per_shot_deltas: dict[str, dict[str, float]]
    chosen_hyperparams: dict[str, dict[str, dict]]
    attachments: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "methods": list(self.methods),
            "shots": list(self.shots),
            "seeds": list(self.seeds),
            "accuracies": self.accuracies,
            "per_shot": self.per_shot,
            "per_method": self.per_method,
            "deltas": self.deltas,
            "per_shot_deltas": self.per_shot_deltas,
            "chosen_hyperparams": self.chosen_hyperparams,
            "attachments": self.attachments,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(**data)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(self.canonical_json())

    @classmethod
    def from_json(cls, path: str | Path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LoadedData:
    train: EmbeddingSet
    val: EmbeddingSet
    test: EmbeddingSet
    w: TextClassifier
    train_adapted: EmbeddingSet | None = None
    val_adapted: EmbeddingSet | None = None
    test_adapted: EmbeddingSet | None = None


def load_experiment_data(config: ExperimentConfig) -> LoadedData:
    config.validate()
    sets = {k: read_embedding_set(v) for k, v in config.paths.items()
            if k != "text_weights"}
    w = text_classifier_from_set(read_embedding_set(config.paths["text_weights"]))
    names = sets["train"].class_names
    for key, es in sets.items():
        if es.class_names != names:
            raise ValueError(f"class names of {key!r} disagree with the training set")
    if w.class_names != names:
        raise ValueError("classifier class names disagree with the training set")
    return LoadedData(
        train=sets["train"], val=sets["val"], test=sets["test"], w=w,
        train_adapted=sets.get("train_adapted"),
        val_adapted=sets.get("val_adapted"),
        test_adapted=sets.get("test_adapted"),
    )


def _mean(values: list[float]) -> float:
    return float(sum(values) / len(values))


def _build_caches(config: ExperimentConfig, data: LoadedData
                  ) -> tuple[dict, dict]:
    caches: dict[tuple[int, int], CacheModel] = {}
    caches_adapted: dict[tuple[int, int], CacheModel] = {}
    for k in config.shots:
        for seed in config.seeds:
            idx = sample_shots(data.train, k, seed)
            caches[(k, seed)] = build_cache(data.train, idx)
            if data.train_adapted is not None:
                caches_adapted[(k, seed)] = build_cache(data.train_adapted, idx)
    return caches, caches_adapted


def _assemble_report(config: ExperimentConfig,
                     results: dict[tuple[str, int, int], float],
                     chosen: dict[str, dict[str, dict]],
                     attachments: dict, provenance: dict) -> EvalReport:
    accuracies = {
        m: {str(k): {str(s): results[(m, k, s)] for s in config.seeds}
            for k in config.shots}
        for m in config.methods
    }
    per_shot = {
        m: {str(k): _mean([results[(m, k, s)] for s in config.seeds])
            for k in config.shots}
        for m in config.methods
    }
    per_method = {m: _mean(list(per_shot[m].values())) for m in config.methods}
    deltas: dict[str, float] = {}
    per_shot_deltas: dict[str, dict[str, float]] = {}
    for better, base in DELTA_PAIRS:
        if better in per_method and base in per_method:
            key = f"{better}-{base}"
            deltas[key] = per_method[better] - per_method[base]
            per_shot_deltas[key] = {
                str(k): per_shot[better][str(k)] - per_shot[base][str(k)]
                for k in config.shots
            }
    return EvalReport(
        dataset=config.dataset, methods=list(config.methods),
        shots=list(config.shots), seeds=list(config.seeds),
        accuracies=accuracies, per_shot=per_shot, per_method=per_method,
        deltas=deltas, per_shot_deltas=per_shot_deltas,
        chosen_hyperparams=chosen, attachments=attachments,
        provenance=provenance,
    )


def run_experiment_on_data(config: ExperimentConfig, data: LoadedData,
                           workers: int = 1,
                           pinned_hyperparams: dict[str, dict[str, dict]] | None = None
                           ) -> EvalReport:
    """Evaluate every (method, shot, seed) cell on already-loaded data.

    When pinned_hyperparams (method -> shot -> hp dict) is given it
    overrides both the search and the config hyperparameters; robustness
    runs use this to freeze source-tuned values.
    """
    min_class = min(int(np.count_nonzero(data.train.labels == c))
                    for c in range(data.train.num_classes))
    for k in config.shots:
        if k > min_class:
            raise ValueError(f"shot count {k} exceeds smallest class size {min_class}")
    if any(m in _PLUSPLUS for m in config.methods) and data.train_adapted is None:
        raise ValueError("++ methods require adapted embeddings")

    caches, caches_adapted = _build_caches(config, data)

    grids = config.grids()
    chosen: dict[str, dict[str, dict]] = {}
    hp_for: dict[tuple[str, int], HyperParams] = {}
    first_seed = config.seeds[0]
    for method in config.methods:
        chosen[method] = {}
        for k in config.shots:
            if pinned_hyperparams is not None:
                hp = HyperParams(**pinned_hyperparams[method][str(k)])
            elif config.search and method != "zero-shot":
                # hyperparameters are tuned once per (method, shot) on the
                # validation split, using the first seed's cache
                hp, _ = grid_search(
                    method, data.val, caches[(k, first_seed)], data.w, grids,
                    config.hyperparams,
                    val_adapted=data.val_adapted,
                    cache_adapted=caches_adapted.get((k, first_seed)),
                )
            else:
                hp = config.hyperparams
            hp_for[(method, k)] = hp
            chosen[method][str(k)] = hp.to_dict()

    def evaluate_cell(method: str, k: int, seed: int) -> float:
        bundle = method_logits(
            method, hp_for[(method, k)],
            test=data.test, cache=caches[(k, seed)], w=data.w,
            test_adapted=data.test_adapted,
            cache_adapted=caches_adapted.get((k, seed)),
        )
        return accuracy(bundle, data.test.labels)

    cells = [(m, k, s) for m in config.methods for k in config.shots
             for s in config.seeds]
    results: dict[tuple[str, int, int], float] = {}
    if workers <= 1:
        for cell in cells:
            results[cell] = evaluate_cell(*cell)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {cell: pool.submit(evaluate_cell, *cell) for cell in cells}
            results = {cell: fut.result() for cell, fut in futures.items()}

    attachments: dict = {}
    if config.attach_metrics:
        seed = config.seeds[0]
        imo_orig = imo_intersection(data.val, seed=seed)
        var_orig, frac_orig = feature_variance(data.val)
        attachments["imo"] = {"original": imo_orig.to_dict()}
        attachments["variance"] = {
            "original": {"mean_variance": float(var_orig.mean()),
                         "low_variance_fraction": frac_orig},
        }
        if data.val_adapted is not None:
            imo_adapted = imo_intersection(data.val_adapted, seed=seed)
            var_a, frac_a = feature_variance(data.val_adapted)
            attachments["imo"]["adapted"] = imo_adapted.to_dict()
            attachments["variance"]["adapted"] = {
                "mean_variance": float(var_a.mean()),
                "low_variance_fraction": frac_a,
            }

    provenance = {
        "config_sha256": config.config_hash(),
        "files": {k: sha256_of_file(v) for k, v in sorted(config.paths.items())
                  if Path(v).exists()},
    }
    return _assemble_report(config, results, chosen, attachments, provenance)


def run_experiment(config: ExperimentConfig, workers: int = 1) -> EvalReport:
    """Load the configured files and evaluate the full protocol."""
    data = load_experiment_data(config)
    return run_experiment_on_data(config, data, workers=workers)


# ── robustness to distribution shift ─────────────────────────────────────


@dataclass(frozen=True)
class RobustnessTarget:
    """A shifted evaluation set, optionally with its own class-name mapping."""

    name: str
    test: EmbeddingSet
    test_adapted: EmbeddingSet | None = None
    mapping: dict[str, str] | None = None


@dataclass
class RobustnessReport:
    source: EvalReport
    targets: dict[str, EvalReport]

    def to_dict(self) -> dict:
        return {
            "source": self.source.to_dict(),
            "targets": {k: v.to_dict() for k, v in sorted(self.targets.items())},
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def remap_to_source_classes(target: EmbeddingSet, source_names: tuple[str, ...],
                            mapping: dict[str, str] | None = None) -> EmbeddingSet:
    """Re-express target labels in the source class vocabulary.

    Every target class name (after optional renaming through the mapping)
    must exist in the source vocabulary.
    """
    index_of = {name: i for i, name in enumerate(source_names)}
    lut = np.empty(target.num_classes, dtype=np.int64)
    for i, name in enumerate(target.class_names):
        mapped = (mapping or {}).get(name, name)
        if mapped not in index_of:
            raise ValueError(f"unmappable class name {name!r} (mapped to {mapped!r})")
        lut[i] = index_of[mapped]
    return EmbeddingSet(
        vectors=target.vectors, labels=lut[target.labels],
        class_names=source_names, normalized=target.normalized,
    )


def robustness_run(source_config: ExperimentConfig,
                   targets: list[RobustnessTarget],
                   workers: int = 1) -> RobustnessReport:
    """Evaluate source-tuned methods on shifted targets without re-tuning.

    The cache comes from the source training split (use shots=[16] for the
    standard protocol); hyperparameters are frozen from the source run.
    """
    data = load_experiment_data(source_config)
    source_report = run_experiment_on_data(source_config, data, workers=workers)

    target_reports: dict[str, EvalReport] = {}
    for target in targets:
        mapped = remap_to_source_classes(target.test, data.train.class_names,
                                         target.mapping)
        mapped_adapted = None
        if target.test_adapted is not None:
            mapped_adapted = remap_to_source_classes(
                target.test_adapted, data.train.class_names, target.mapping)
        shifted = LoadedData(
            train=data.train, val=data.val, test=mapped, w=data.w,
            train_adapted=data.train_adapted, val_adapted=data.val_adapted,
            test_adapted=mapped_adapted,
        )
        target_config = ExperimentConfig(
            dataset=target.name, paths=source_config.paths,
            methods=list(source_config.methods), shots=list(source_config.shots),
            seeds=list(source_config.seeds), search=False,
            alpha_grid=source_config.alpha_grid, beta_grid=source_config.beta_grid,
            gamma_grid=source_config.gamma_grid,
            hyperparams=source_config.hyperparams,
        )
        target_reports[target.name] = run_experiment_on_data(
            target_config, shifted, workers=workers,
            pinned_hyperparams=source_report.chosen_hyperparams,
        )
    return RobustnessReport(source=source_report, targets=target_reports)


# ── overlap-reduction vs performance study ───────────────────────────────


@dataclass(frozen=True)
class StudyPair:
    """One dataset encoded by both the original and the adapted encoder."""

    name: str
    train: EmbeddingSet
    val: EmbeddingSet
    test: EmbeddingSet
    w: TextClassifier
    train_adapted: EmbeddingSet
    val_adapted: EmbeddingSet
    test_adapted: EmbeddingSet


@dataclass
class StudyReport:
    names: list[str]
    delta_imo: list[float]
    delta_acc: list[float]
    pearson_r: float | None
    slope: float | None
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "names": self.names, "delta_imo": self.delta_imo,
            "delta_acc": self.delta_acc, "pearson_r": self.pearson_r,
            "slope": self.slope, "degenerate": self.degenerate,
        }


def imo_performance_study(pairs: list[StudyPair], hp: HyperParams,
                          shots: list[int], seeds: list[int],
                          imo_seed: int = 0) -> StudyReport:
    """Correlate overlap reduction with the cache-method gain across datasets.

    Per dataset: delta_imo is the original-minus-adapted intersection area on
    the validation split; delta_acc is the mean TA++ minus TA test accuracy
    over the given shots and seeds at fixed hyperparameters. A flat study
    (all deltas zero) has no defined correlation and is flagged degenerate.
    """
    if len(pairs) < 3:
        raise ValueError("need at least 3 dataset pairs")
    names: list[str] = []
    delta_imo: list[float] = []
    delta_acc: list[float] = []
    for pair in pairs:
        area_orig = imo_intersection(pair.val, seed=imo_seed).intersection_area
        area_adapted = imo_intersection(pair.val_adapted, seed=imo_seed).intersection_area
        gains: list[float] = []
        for k in shots:
            for seed in seeds:
                idx = sample_shots(pair.train, k, seed)
                cache = build_cache(pair.train, idx)
                cache_adapted = build_cache(pair.train_adapted, idx)
                acc_ta = accuracy(
                    tip_adapter_logits(pair.test, cache, pair.w, hp),
                    pair.test.labels)
                acc_tapp = accuracy(
                    plusplus_logits(pair.test, pair.test_adapted, cache_adapted,
                                    pair.w, hp, variant="TA++", cache_orig=cache),
                    pair.test.labels)
                gains.append(acc_tapp - acc_ta)
        names.append(pair.name)
        delta_imo.append(area_orig - area_adapted)
        delta_acc.append(_mean(gains))

    try:
        r = pearson(np.asarray(delta_imo), np.asarray(delta_acc))
        x = np.asarray(delta_imo)
        y = np.asarray(delta_acc)
        slope = float(((x - x.mean()) * (y - y.mean())).sum()
                      / ((x - x.mean()) ** 2).sum())
        degenerate = False
    except ValueError:
        r, slope, degenerate = None, None, True
    return StudyReport(names=names, delta_imo=delta_imo, delta_acc=delta_acc,
                       pearson_r=r, slope=slope, degenerate=degenerate)

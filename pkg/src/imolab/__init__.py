"""Training-free few-shot classification over embedding caches, plus the
measurement toolkit for intra-modal overlap analysis."""

from .classifiers import (
    ChannelMask,
    HyperParams,
    LogitsBundle,
    ape_logits,
    ape_refine,
    clip_logits,
    plusplus_logits,
    tip_adapter_logits,
    tip_x_logits,
)
from .harness import (
    EvalReport,
    ExperimentConfig,
    RobustnessReport,
    RobustnessTarget,
    StudyPair,
    StudyReport,
    accuracy,
    grid_search,
    imo_performance_study,
    robustness_run,
    run_experiment,
    sample_shots,
)
from .metrics import (
    ImoReport,
    PadReport,
    feature_variance,
    imo_intersection,
    pearson,
    proxy_a_distance,
)
from .store import (
    CacheModel,
    EmbeddingSet,
    IMOEFormatError,
    TextClassifier,
    build_cache,
    read_embedding_set,
    read_manifest,
    text_classifier_from_set,
    write_embedding_set,
    write_manifest,
)
from .synth import SynthBundle, SynthSpec, generate, generate_pair

__version__ = "0.1.0"

__all__ = [
    "CacheModel", "ChannelMask", "EmbeddingSet", "EvalReport",
    "ExperimentConfig", "HyperParams", "IMOEFormatError", "ImoReport",
    "LogitsBundle", "PadReport", "RobustnessReport", "RobustnessTarget",
    "StudyPair", "StudyReport", "SynthBundle", "SynthSpec", "TextClassifier",
    "accuracy", "ape_logits", "ape_refine", "build_cache", "clip_logits",
    "feature_variance", "generate", "generate_pair", "grid_search",
    "imo_intersection", "imo_performance_study", "pearson", "plusplus_logits",
    "proxy_a_distance", "read_embedding_set", "read_manifest",
    "robustness_run", "run_experiment", "sample_shots",
    "text_classifier_from_set", "tip_adapter_logits", "tip_x_logits",
    "write_embedding_set", "write_manifest",
]

"""Chronic disease risk scores from lifestyle survey answers.

Pipeline: clean raw survey CSVs against a declarative codebook, train one
residual-MLP risk model per disease with class-weighted cross-entropy,
explain predictions with Kernel SHAP against a k-means background, and serve
risk / what-if queries over HTTP. A synthetic generator with planted
feature effects provides the ground truth the importance rankings are
validated against.
"""

from .errors import CdriskError
from .ingest import (
    CleanRecord,
    FeatureSchema,
    FeatureSpec,
    NormStats,
    Rejected,
    SplitIndices,
    apply_normalizer,
    clean_dataset,
    clean_record,
    cohort_prevalence,
    default_codebook_path,
    fit_normalizer,
    load_codebook,
    split_dataset,
)
from .model import (
    ClassWeights,
    ModelConfig,
    Prediction,
    RiskModel,
    backward,
    classify,
    forward,
    init_model,
    loss_weighted_ce,
    metrics,
)
from .trainer import (
    TrainConfig,
    TrainReport,
    adam_step,
    class_weights,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    train,
)
from .explainer import (
    Attribution,
    Background,
    GlobalImportance,
    exact_shapley,
    global_importance,
    kernel_shap,
    kmeans,
    prepare_background,
    top_k,
    value_function,
)
from .synth import PlantSpec, generate

__version__ = "0.1.0"

__all__ = [
    "CdriskError",
    "CleanRecord",
    "FeatureSchema",
    "FeatureSpec",
    "NormStats",
    "Rejected",
    "SplitIndices",
    "apply_normalizer",
    "clean_dataset",
    "clean_record",
    "cohort_prevalence",
    "default_codebook_path",
    "fit_normalizer",
    "load_codebook",
    "split_dataset",
    "ClassWeights",
    "ModelConfig",
    "Prediction",
    "RiskModel",
    "backward",
    "classify",
    "forward",
    "init_model",
    "loss_weighted_ce",
    "metrics",
    "TrainConfig",
    "TrainReport",
    "adam_step",
    "class_weights",
    "load_checkpoint",
    "lr_schedule",
    "save_checkpoint",
    "train",
    "Attribution",
    "Background",
    "GlobalImportance",
    "exact_shapley",
    "global_importance",
    "kernel_shap",
    "kmeans",
    "prepare_background",
    "top_k",
    "value_function",
    "PlantSpec",
    "generate",
    "__version__",
]

"""Desk-scale training and evaluation harness."""

from .compare import (
    GridSearchResult,
    MetricsReport,
    MetricSummary,
    PolicyMetrics,
    grid_search_smoothing,
    run_comparison,
)
from .data import (
    CLASS_NAMES,
    NUM_CLASSES,
    annotation_counts,
    flatten_images,
    load_cifar10_batch,
    make_dataset,
    make_image,
)
from .metrics import (
    DEFAULT_EPSILON,
    EvalSet,
    calibration_error,
    calibration_error_from_scores,
    fgsm_attack,
    fgsm_error,
    soft_ce,
)
from .network import SoftmaxMLP, soft_cross_entropy
from .training import (
    MixMode,
    TrainConfig,
    TrainData,
    TrainHistory,
    TrainingDivergedError,
    train,
    train_single,
)

__all__ = [
    "CLASS_NAMES",
    "DEFAULT_EPSILON",
    "EvalSet",
    "GridSearchResult",
    "MetricsReport",
    "MetricSummary",
    "MixMode",
    "NUM_CLASSES",
    "PolicyMetrics",
    "SoftmaxMLP",
    "TrainConfig",
    "TrainData",
    "TrainHistory",
    "TrainingDivergedError",
    "annotation_counts",
    "calibration_error",
    "calibration_error_from_scores",
    "fgsm_attack",
    "fgsm_error",
    "flatten_images",
    "grid_search_smoothing",
    "load_cifar10_batch",
    "make_dataset",
    "make_image",
    "run_comparison",
    "soft_ce",
    "soft_cross_entropy",
    "train",
    "train_single",
]

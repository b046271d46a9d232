"""tamperdet: image manipulation detection with edge supervision and noise-view fusion."""

__version__ = "0.1.0"

from .data import (
    AugmentOps,
    AugmentPolicy,
    DatasetManifest,
    ManifestEntry,
    Sample,
    augment,
    generate_dataset,
    load_samples,
)
from .errors import (
    ConfigurationError,
    ContractViolationError,
    DivergenceError,
    EvaluationError,
    GenerationError,
    InputError,
    TamperdetError,
)
from .estimator import ManipulationDetector
from .forge import ManipulationSpec, edge_label_from_mask, forge
from .losses import LossWeights, SampleLabel, clf_loss, combined_loss, dice_loss, edge_loss
from .metrics import (
    MetricsReport,
    ScoredSample,
    auc,
    build_report,
    com_f1,
    image_metrics,
    optimal_threshold_f1,
    pixel_f1,
    robustness_sweep,
)
from .model import ModelConfig, Prediction, TwoBranchNet
from .trainer import TrainConfig, train, train_from_manifests, validate

__all__ = [
    "AugmentOps",
    "AugmentPolicy",
    "ConfigurationError",
    "ContractViolationError",
    "DatasetManifest",
    "DivergenceError",
    "EvaluationError",
    "GenerationError",
    "InputError",
    "LossWeights",
    "ManifestEntry",
    "ManipulationDetector",
    "ManipulationSpec",
    "MetricsReport",
    "ModelConfig",
    "Prediction",
    "Sample",
    "SampleLabel",
    "ScoredSample",
    "TamperdetError",
    "TrainConfig",
    "TwoBranchNet",
    "auc",
    "augment",
    "build_report",
    "clf_loss",
    "com_f1",
    "combined_loss",
    "dice_loss",
    "edge_label_from_mask",
    "edge_loss",
    "forge",
    "generate_dataset",
    "image_metrics",
    "load_samples",
    "optimal_threshold_f1",
    "pixel_f1",
    "robustness_sweep",
    "train",
    "train_from_manifests",
    "validate",
]

"""Robust point-cloud classification with ensembles of partial sub-samples."""

from .classifier import PointSetModel, TrainConfig, forward, loss_and_gradients, new_model, train
from .corruptions import CorruptionSpec, apply_corruption, corrupted_test_set
from .data import DatasetConfig, LabeledCloud, augment, generate_dataset, load_dataset, save_dataset
from .ensemble import (
    SpecialistEnsemble,
    aggregate_majority,
    aggregate_mean,
    predict,
    train_specialists,
)
from .geometry import fps, knn, normalize_unit_sphere, pairwise_knn_table
from .metrics import (
    EvalReport,
    corruption_error,
    diversity_c,
    overall_accuracy,
    pointwise_importance,
    uniformity,
)
from .sampling import (
    SampleKind,
    SamplingParams,
    SubSample,
    extract_curve,
    extract_patch,
    extract_random,
    make_ensemble_inputs,
)

__version__ = "0.1.0"

__all__ = [
    "CorruptionSpec",
    "DatasetConfig",
    "EvalReport",
    "LabeledCloud",
    "PointSetModel",
    "SampleKind",
    "SamplingParams",
    "SpecialistEnsemble",
    "SubSample",
    "TrainConfig",
    "aggregate_majority",
    "aggregate_mean",
    "apply_corruption",
    "augment",
    "corrupted_test_set",
    "corruption_error",
    "diversity_c",
    "extract_curve",
    "extract_patch",
    "extract_random",
    "forward",
    "fps",
    "generate_dataset",
    "knn",
    "load_dataset",
    "loss_and_gradients",
    "make_ensemble_inputs",
    "new_model",
    "normalize_unit_sphere",
    "overall_accuracy",
    "pairwise_knn_table",
    "pointwise_importance",
    "predict",
    "save_dataset",
    "train",
    "train_specialists",
    "uniformity",
]

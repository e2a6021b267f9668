"""Partial monotonicity for small MLPs via a point-wise gradient penalty."""

from .data import Dataset, SyntheticSpec, generate_synthetic, load_adult, split
from .loss import (
    LossBreakdown,
    MonotoneFeature,
    MonotoneSpec,
    empirical_risk,
    parameter_gradient,
    penalty,
    signed_divergence,
    total_loss,
)
from .metrics import auc, conditioned_trends, monotonicity_metric, pearson_correlation
from .model import InitSpec, MlpModel, forward, init_model, input_gradient, load_model, save_model
from .trainer import TrainConfig, TrainLog, train

__version__ = "0.1.0"

__all__ = [
    "Dataset", "SyntheticSpec", "generate_synthetic", "load_adult", "split",
    "LossBreakdown", "MonotoneFeature", "MonotoneSpec", "empirical_risk",
    "parameter_gradient", "penalty", "signed_divergence", "total_loss",
    "auc", "conditioned_trends", "monotonicity_metric", "pearson_correlation",
    "InitSpec", "MlpModel", "forward", "init_model", "input_gradient",
    "load_model", "save_model", "TrainConfig", "TrainLog", "train",
]

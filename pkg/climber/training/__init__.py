"""Cross-entropy training, AUC evaluation and dataset splits."""

from climber.sequence import TrainSample

from .data import parse_synthetic_source, resolve_data_source, temporal_split
from .metrics import auc, loss
from .optim import AdamOptimizer, global_norm
from .trainer import (
    MetricRow,
    PreparedSample,
    TrainHyperParams,
    TrainResult,
    TrainState,
    batch_indices,
    batch_loss,
    evaluate_auc,
    gradients,
    predict,
    prepare_samples,
    train,
)

__all__ = [
    "TrainSample",
    "TrainState",
    "TrainHyperParams",
    "TrainResult",
    "MetricRow",
    "PreparedSample",
    "AdamOptimizer",
    "loss",
    "auc",
    "global_norm",
    "train",
    "batch_loss",
    "batch_indices",
    "gradients",
    "predict",
    "evaluate_auc",
    "prepare_samples",
    "temporal_split",
    "resolve_data_source",
    "parse_synthetic_source",
]

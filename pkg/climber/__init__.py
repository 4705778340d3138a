"""Multi-scale sequence ranking with adaptive-temperature attention and cached serving."""

from importlib import metadata

from .errors import (
    CheckpointError,
    ClimberError,
    ConfigurationError,
    ContractError,
    DimensionError,
    DomainError,
    EventFormatError,
    NumericError,
    StaleCacheError,
    TrainingDivergedError,
    UndefinedMetricError,
    VocabularyError,
)
from .experiments import ExperimentConfig, count_flops, load_experiment_config, run_ablation, run_grid, run_scaling
from .model import ClimberModel, ModelConfig, Parameters, load_checkpoint, save_checkpoint, score
from .sequence import Event, ExtractionStrategy, LifecycleSequence, extract, load_events, synthesize_users
from .serving import ScoringRequest, ServingEngine, bench_throughput, build_cache, score_with_cache
from .training import TrainHyperParams, auc, loss, train

__all__ = [
    "ClimberError",
    "DimensionError",
    "DomainError",
    "ContractError",
    "NumericError",
    "EventFormatError",
    "ConfigurationError",
    "VocabularyError",
    "StaleCacheError",
    "UndefinedMetricError",
    "TrainingDivergedError",
    "CheckpointError",
    "Event",
    "LifecycleSequence",
    "ExtractionStrategy",
    "extract",
    "load_events",
    "synthesize_users",
    "ModelConfig",
    "Parameters",
    "ClimberModel",
    "score",
    "save_checkpoint",
    "load_checkpoint",
    "ScoringRequest",
    "ServingEngine",
    "build_cache",
    "score_with_cache",
    "bench_throughput",
    "TrainHyperParams",
    "train",
    "loss",
    "auc",
    "ExperimentConfig",
    "load_experiment_config",
    "count_flops",
    "run_grid",
    "run_scaling",
    "run_ablation",
]

try:
    __version__ = metadata.version("climber-rec")
except metadata.PackageNotFoundError:  # pragma: no cover - local editable source
    __version__ = "0.1.0"

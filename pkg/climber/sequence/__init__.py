"""Event logs, lifecycle sequences and multi-scale sequence extraction."""

from .extraction import STRATEGY_PRESETS, default_strategies, extract, extract_all
from .ingest import IngestReport, load_events, write_events
from .models import (
    ACTION_INDEX,
    ACTIONS,
    PAD_ITEM,
    POSITIVE_ACTIONS,
    Action,
    Event,
    ExtractionStrategy,
    InteractionDataset,
    LifecycleSequence,
    SubSequence,
    TrainSample,
    strategy_set_digest,
    validate_strategy_set,
)
from .synthetic import SyntheticDataset, synthesize_users

__all__ = [
    "Action",
    "ACTIONS",
    "ACTION_INDEX",
    "POSITIVE_ACTIONS",
    "PAD_ITEM",
    "Event",
    "LifecycleSequence",
    "ExtractionStrategy",
    "SubSequence",
    "TrainSample",
    "InteractionDataset",
    "SyntheticDataset",
    "IngestReport",
    "STRATEGY_PRESETS",
    "default_strategies",
    "extract",
    "extract_all",
    "load_events",
    "write_events",
    "synthesize_users",
    "strategy_set_digest",
    "validate_strategy_set",
]

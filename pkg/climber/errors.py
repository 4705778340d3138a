"""Exception hierarchy shared by every climber subpackage."""

from __future__ import annotations


class ClimberError(Exception):
    """Base class for all climber errors."""


class DimensionError(ClimberError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(ClimberError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(ClimberError, ValueError):
    """A caller broke an operation precondition."""


class NumericError(ClimberError, ArithmeticError):
    """A forward pass produced a non-finite value."""

    def __init__(self, message: str, *, block: int | None = None, layer: int | None = None) -> None:
        super().__init__(message)
        self.block = block
        self.layer = layer


class EventFormatError(ClimberError, ValueError):
    """An event log is not UTF-8 text or has too many malformed rows."""


class ConfigurationError(ClimberError, ValueError):
    """A model, strategy or experiment configuration is inconsistent."""


class VocabularyError(ClimberError, ValueError):
    """An item, action or scenario id is outside the configured vocabulary."""


class StaleCacheError(ClimberError, RuntimeError):
    """A KV cache was built for different parameters, strategies or scenario."""


class UndefinedMetricError(ClimberError, ValueError):
    """A metric is undefined for the given input (e.g. single-class AUC)."""


class CheckpointError(ClimberError, ValueError):
    """A checkpoint file is corrupt or belongs to a different configuration."""


class TrainingDivergedError(ClimberError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, *, step: int, last_good_state: object | None = None) -> None:
        super().__init__(message)
        self.step = step
        self.last_good_state = last_good_state

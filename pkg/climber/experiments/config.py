"""Experiment configuration read from a TOML file."""

from __future__ import annotations

import tomllib
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from climber.errors import ConfigurationError
from climber.model import ModelConfig
from climber.serving import DEFAULT_MAX_BATCH
from climber.training import TrainHyperParams

from .grid import GridSpec

DEFAULT_FAMILIES = (((64, 1), (32, 2), (16, 4), (8, 8)),)


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    source: str = "synthetic:seed=0,users=64"


class ExperimentSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seeds: tuple[int, ...] = (0, 1, 2)
    workers: int = Field(default=1, ge=1)
    families: tuple[tuple[tuple[int, int], ...], ...] = DEFAULT_FAMILIES
    layers: tuple[int, ...] = (1, 2, 4)
    sequence: tuple[int, ...] = (8, 16, 32)


class BenchSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    candidates: tuple[int, ...] = (1, 16, 64, 256)
    reps: int = Field(default=3, ge=1)
    seed: int = 0
    model: Optional[ModelConfig] = None


class ServingSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    capacity: int = Field(default=1024, ge=1)
    max_batch: int = Field(default=DEFAULT_MAX_BATCH, ge=1, le=DEFAULT_MAX_BATCH)


class ExperimentConfig(BaseModel):
    """All sections of an experiment file; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelConfig = Field(default_factory=ModelConfig)
    data: DataSection = Field(default_factory=DataSection)
    train: TrainHyperParams = Field(default_factory=TrainHyperParams)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    bench: BenchSection = Field(default_factory=BenchSection)
    serving: ServingSection = Field(default_factory=ServingSection)

    def grid_spec(self) -> GridSpec:
        return GridSpec(
            families=self.experiment.families,
            seeds=self.experiment.seeds,
            steps=self.train.steps,
            workers=self.experiment.workers,
        )

    def bench_model(self) -> ModelConfig:
        return self.bench.model or self.model


def experiment_from_mapping(raw: dict[str, Any]) -> ExperimentConfig:
    """Validate parsed TOML; top-level ``[[strategies]]`` tables feed the model section."""
    data = dict(raw)
    strategies = data.pop("strategies", None)
    if strategies is not None:
        model = dict(data.get("model", {}))
        budget = model.get("budget", ModelConfig.model_fields["budget"].default)
        model["strategies"] = [
            {"strategy_id": index, "budget": budget, **strategy} for index, strategy in enumerate(strategies)
        ]
        model.setdefault("num_blocks", len(strategies))
        data["model"] = model
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid experiment config: {exc}") from exc


def load_experiment_config(path: str | Path | None) -> ExperimentConfig:
    """Read ``path``; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with Path(path).open("rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return experiment_from_mapping(raw)

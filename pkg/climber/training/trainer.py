"""Single-writer training loop over compacted multi-candidate samples."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from climber.errors import ConfigurationError, TrainingDivergedError, UndefinedMetricError
from climber.model import (
    Checkpoint,
    ModelConfig,
    Parameters,
    forward_logits,
    load_checkpoint,
    prepare_batch,
    save_checkpoint,
)
from climber.numerics import Tape, Tensor, add, backward, mul
from climber.sequence import InteractionDataset, SubSequence, TrainSample, extract_all

from .metrics import auc, loss
from .optim import AdamOptimizer

logger = logging.getLogger(__name__)

EVAL_CHUNK = 64


class TrainHyperParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(default=3e-3, ge=0.0)
    steps: int = Field(default=200, ge=0)
    batch_users: int = Field(default=8, ge=1)
    seed: int = 0
    eval_every: int = Field(default=50, ge=1)
    clip_norm: Optional[float] = Field(default=1.0, gt=0.0)


class MetricRow(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    step: int
    loss: float
    eval_auc: Optional[float] = None


@dataclass(frozen=True)
class PreparedSample:
    """A training sample with its subsequences already extracted."""

    subsequences: tuple[SubSequence, ...]
    candidates: tuple[int, ...]
    labels: tuple[int, ...]
    scenario_id: int
    request_time: int


def prepare_samples(
    dataset: InteractionDataset, samples: Sequence[TrainSample], config: ModelConfig
) -> list[PreparedSample]:
    strategies = config.strategy_set()
    prepared = []
    for sample in samples:
        history = dataset.history(sample)
        prepared.append(
            PreparedSample(
                subsequences=tuple(extract_all(history, strategies)),
                candidates=sample.candidates,
                labels=sample.labels,
                scenario_id=sample.scenario_id,
                request_time=history.last_timestamp,
            )
        )
    return prepared


def _group_by_size(samples: Sequence[PreparedSample]) -> list[list[PreparedSample]]:
    groups: dict[int, list[PreparedSample]] = defaultdict(list)
    for sample in samples:
        groups[len(sample.candidates)].append(sample)
    return [groups[m] for m in sorted(groups)]


def _batch(config: ModelConfig, group: Sequence[PreparedSample]):
    return prepare_batch(
        config,
        [s.subsequences for s in group],
        [s.candidates for s in group],
        [s.scenario_id for s in group],
        [s.request_time for s in group],
    )


def batch_loss(params: Parameters, config: ModelConfig, samples: Sequence[PreparedSample]) -> Tensor:
    """Mean over samples of each sample's mean candidate loss."""
    total: Tensor | None = None
    for group in _group_by_size(samples):
        logits = forward_logits(params, config, _batch(config, group))
        group_loss = mul(loss(logits, [s.labels for s in group]), len(group) / len(samples))
        total = group_loss if total is None else add(total, group_loss)
    assert total is not None
    return total


def predict(params: Parameters, config: ModelConfig, samples: Sequence[PreparedSample]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated logits and labels over ``samples`` (no tape)."""
    scores, labels = [], []
    for group in _group_by_size(samples):
        for start in range(0, len(group), EVAL_CHUNK):
            chunk = group[start : start + EVAL_CHUNK]
            scores.append(forward_logits(params, config, _batch(config, chunk)).numpy().reshape(-1))
            labels.append(np.asarray([s.labels for s in chunk]).reshape(-1))
    return np.concatenate(scores), np.concatenate(labels)


def evaluate_auc(params: Parameters, config: ModelConfig, samples: Sequence[PreparedSample]) -> float:
    if not samples:
        return math.nan
    scores, labels = predict(params, config, samples)
    try:
        return auc(scores, labels)
    except UndefinedMetricError:
        logger.warning("evaluation labels hold a single class; eval AUC undefined")
        return math.nan


@dataclass
class TrainState:
    """Everything needed to resume training bit-for-bit."""

    config: ModelConfig
    params: Parameters
    optimizer: AdamOptimizer
    step: int = 0
    seed: int = 0

    @classmethod
    def fresh(cls, config: ModelConfig, hyper: TrainHyperParams) -> "TrainState":
        return cls(
            config=config,
            params=Parameters.initialize(config, hyper.seed),
            optimizer=AdamOptimizer(lr=hyper.lr, clip_norm=hyper.clip_norm),
            step=0,
            seed=hyper.seed,
        )

    def snapshot(self) -> "TrainState":
        return TrainState(self.config, self.params.copy(), self.optimizer.copy(), self.step, self.seed)

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(
            path,
            self.config,
            self.params,
            optimizer_state=self.optimizer.state_arrays(),
            metadata={
                "step": self.step,
                "seed": self.seed,
                "lr": self.optimizer.lr,
                "clip_norm": self.optimizer.clip_norm,
            },
        )

    @classmethod
    def load(cls, path: str | Path, config: ModelConfig | None = None) -> "TrainState":
        checkpoint: Checkpoint = load_checkpoint(path, config)
        meta = checkpoint.metadata
        optimizer = AdamOptimizer(lr=meta.get("lr", 0.0), clip_norm=meta.get("clip_norm", 1.0))
        optimizer.load_state_arrays(checkpoint.optimizer_state, int(meta.get("step", 0)))
        return cls(
            config=checkpoint.config,
            params=checkpoint.params,
            optimizer=optimizer,
            step=int(meta.get("step", 0)),
            seed=int(meta.get("seed", 0)),
        )


@dataclass
class TrainResult:
    state: TrainState
    curve: list[MetricRow] = field(default_factory=list)

    @property
    def final_auc(self) -> float:
        for row in reversed(self.curve):
            if row.eval_auc is not None:
                return row.eval_auc
        return math.nan


def batch_indices(seed: int, step: int, num_samples: int, batch_users: int) -> np.ndarray:
    """Sample indices for ``step``; depends only on ``(seed, step)``."""
    rng = np.random.default_rng([seed, step])
    return np.sort(rng.choice(num_samples, size=min(batch_users, num_samples), replace=False))


def gradients(params: Parameters, config: ModelConfig, samples: Sequence[PreparedSample]) -> tuple[float, dict[str, np.ndarray]]:
    params.requires_grad_(True)
    with Tape() as tape:
        value = batch_loss(params, config, samples)
    backward(tape, value)
    grads = {
        name: np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad.copy()
        for name, tensor in params.items()
    }
    params.requires_grad_(False)
    return value.item(), grads


def train(
    dataset: InteractionDataset,
    config: ModelConfig,
    hyper: TrainHyperParams,
    *,
    state: TrainState | None = None,
    on_row: Callable[[MetricRow], None] | None = None,
) -> TrainResult:
    """Adam on batches of ``batch_users`` samples until ``hyper.steps``.

    Evaluation AUC is recorded every ``eval_every`` steps and at the last step.
    A non-finite loss raises :class:`TrainingDivergedError` carrying the state
    from before the failing step.
    """
    if not dataset.train_samples:
        raise ConfigurationError("training dataset has no samples")
    state = state if state is not None else TrainState.fresh(config, hyper)
    if state.config.digest() != config.digest():
        raise ConfigurationError("resume state was produced under a different model config")
    train_set = prepare_samples(dataset, dataset.train_samples, config)
    eval_set = prepare_samples(dataset, dataset.eval_samples, config)
    result = TrainResult(state=state)

    while state.step < hyper.steps:
        idx = batch_indices(state.seed, state.step, len(train_set), hyper.batch_users)
        value, grads = gradients(state.params, config, [train_set[i] for i in idx])
        if not math.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            logger.error("training diverged at step %d (loss=%s)", state.step + 1, value)
            raise TrainingDivergedError(
                f"non-finite loss at step {state.step + 1}", step=state.step + 1, last_good_state=state.snapshot()
            )
        state.optimizer.step(state.params, grads)
        state.step += 1

        eval_auc = None
        if state.step % hyper.eval_every == 0 or state.step == hyper.steps:
            eval_auc = evaluate_auc(state.params, config, eval_set)
            logger.info("step %d loss=%.6f eval_auc=%.4f", state.step, value, eval_auc)
        row = MetricRow(step=state.step, loss=value, eval_auc=eval_auc)
        result.curve.append(row)
        if on_row is not None:
            on_row(row)
    return result

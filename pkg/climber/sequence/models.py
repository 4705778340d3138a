"""Pydantic models for interaction events, lifecycle sequences and samples."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import StrEnum
from typing import Iterable, Literal, Mapping, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from climber.errors import ConfigurationError, VocabularyError

PAD_ITEM = 0


class Action(StrEnum):
    """Interaction type recorded for an event. New kinds are added as members."""

    PLAY_FULL = "play_full"
    LIKE = "like"
    SHARE = "share"
    COMMENT = "comment"
    CLICK = "click"
    SKIP = "skip"


ACTIONS: tuple[Action, ...] = tuple(Action)
ACTION_INDEX: dict[Action, int] = {action: idx for idx, action in enumerate(ACTIONS)}
POSITIVE_ACTIONS: frozenset[Action] = frozenset({Action.PLAY_FULL, Action.LIKE, Action.SHARE, Action.COMMENT})


class Event(BaseModel):
    """One user-item interaction."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    item_id: int = Field(ge=0)
    action: Action
    timestamp: int = Field(ge=0)
    scenario_id: int = Field(default=0, ge=0)
    score: Optional[float] = None


class LifecycleSequence(BaseModel):
    """A user's full chronological history across scenarios."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    user_id: str = Field(min_length=1)
    events: tuple[Event, ...] = ()

    @model_validator(mode="after")
    def _validate_order(self) -> "LifecycleSequence":
        previous = -1
        for event in self.events:
            if event.timestamp < previous:
                raise ValueError(f"events of user {self.user_id} are not in non-decreasing timestamp order")
            previous = event.timestamp
        return self

    @property
    def length(self) -> int:
        return len(self.events)

    @property
    def last_timestamp(self) -> int:
        return self.events[-1].timestamp if self.events else 0

    def truncated(self, length: int | None) -> "LifecycleSequence":
        """The first ``length`` events (the visible history at a split point)."""
        if length is None or length >= len(self.events):
            return self
        return LifecycleSequence.model_construct(user_id=self.user_id, events=self.events[: max(0, length)])

    def check_vocabulary(self, vocab_size: int, num_scenarios: int) -> None:
        for event in self.events:
            if event.item_id >= vocab_size:
                raise VocabularyError(f"item_id {event.item_id} outside vocabulary of size {vocab_size}")
            if event.scenario_id >= num_scenarios:
                raise VocabularyError(f"scenario_id {event.scenario_id} outside {num_scenarios} scenarios")


class ExtractionStrategy(BaseModel):
    """A named filter plus length budget producing one subsequence."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    strategy_id: int = Field(default=0, ge=0)
    name: str = Field(min_length=1)
    action_filter: frozenset[Action] = Field(default_factory=lambda: frozenset(ACTIONS))
    scenario_filter: Optional[frozenset[int]] = None
    budget: int = Field(gt=0)
    min_score: Optional[float] = None
    recency_rule: Literal["most_recent"] = "most_recent"

    def matches(self, event: Event) -> bool:
        if event.action not in self.action_filter:
            return False
        if self.scenario_filter is not None and event.scenario_id not in self.scenario_filter:
            return False
        if self.min_score is not None and (event.score is None or event.score < self.min_score):
            return False
        return True

    def canonical(self) -> dict[str, object]:
        return {
            "strategy_id": self.strategy_id,
            "name": self.name,
            "action_filter": sorted(a.value for a in self.action_filter),
            "scenario_filter": None if self.scenario_filter is None else sorted(self.scenario_filter),
            "budget": self.budget,
            "min_score": self.min_score,
            "recency_rule": self.recency_rule,
        }


def validate_strategy_set(strategies: Sequence[ExtractionStrategy]) -> None:
    """Raise when the set is empty or budgets differ (equal-length subsequences)."""
    if not strategies:
        raise ConfigurationError("at least one extraction strategy is required")
    budgets = {s.budget for s in strategies}
    if len(budgets) != 1:
        raise ConfigurationError(f"extraction strategies must share one budget, got {sorted(budgets)}")


def strategy_set_digest(strategies: Iterable[ExtractionStrategy]) -> str:
    payload = json.dumps([s.canonical() for s in strategies], sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SubSequence:
    """Fixed-shape, left-padded output of one extraction strategy.

    Array fields have length ``budget``; the last ``valid_length`` slots hold
    the kept events in their original order, earlier slots are padding.
    """

    strategy_id: int
    budget: int
    valid_length: int
    item_ids: np.ndarray
    action_ids: np.ndarray
    timestamps: np.ndarray
    scenario_ids: np.ndarray
    events: tuple[Event, ...]
    source_indices: tuple[int, ...]

    @property
    def valid_mask(self) -> np.ndarray:
        mask = np.zeros(self.budget, dtype=bool)
        if self.valid_length:
            mask[-self.valid_length :] = True
        return mask

    @property
    def pad_length(self) -> int:
        return self.budget - self.valid_length

    def as_sequence(self, user_id: str) -> LifecycleSequence:
        return LifecycleSequence(user_id=user_id, events=self.events)


class TrainSample(BaseModel):
    """One "single user, multiple items" record: a history cut plus m labelled candidates."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    user_id: str = Field(min_length=1)
    scenario_id: int = Field(default=0, ge=0)
    candidates: tuple[int, ...] = Field(min_length=1)
    labels: tuple[int, ...] = Field(min_length=1)
    history_length: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _validate_labels(self) -> "TrainSample":
        if len(self.labels) != len(self.candidates):
            raise ValueError(f"{len(self.candidates)} candidates but {len(self.labels)} labels")
        if any(label not in (0, 1) for label in self.labels):
            raise ValueError("labels must be 0 or 1")
        return self

    @property
    def size(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class InteractionDataset:
    """Lifecycle sequences keyed by user plus train/eval samples."""

    users: Mapping[str, LifecycleSequence]
    train_samples: tuple[TrainSample, ...]
    eval_samples: tuple[TrainSample, ...]

    def history(self, sample: TrainSample) -> LifecycleSequence:
        return self.users[sample.user_id].truncated(sample.history_length)

    def __post_init__(self) -> None:
        for sample in self.train_samples + self.eval_samples:
            if sample.user_id not in self.users:
                raise ConfigurationError(f"sample references unknown user {sample.user_id!r}")

"""Dataset construction: temporal splits of logs and data-source strings."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Iterable

from climber.errors import ConfigurationError
from climber.model import ModelConfig
from climber.sequence import (
    POSITIVE_ACTIONS,
    Action,
    InteractionDataset,
    LifecycleSequence,
    TrainSample,
    load_events,
    synthesize_users,
)

logger = logging.getLogger(__name__)

MIN_EVENTS_PER_USER = 5


def _window_sample(
    user: LifecycleSequence,
    start: int,
    stop: int,
    targets: frozenset[Action],
    max_candidates: int,
) -> TrainSample | None:
    window = user.events[start:stop][:max_candidates]
    if not window:
        return None
    return TrainSample(
        user_id=user.user_id,
        scenario_id=window[0].scenario_id,
        candidates=tuple(e.item_id for e in window),
        labels=tuple(int(e.action in targets) for e in window),
        history_length=start,
    )


def temporal_split(
    sequences: Iterable[LifecycleSequence],
    *,
    holdout_fraction: float = 0.2,
    target_actions: Iterable[Action] = POSITIVE_ACTIONS,
    max_candidates: int = 16,
) -> InteractionDataset:
    """Hold out the last ``holdout_fraction`` of each user's events.

    The held-out window becomes one evaluation sample whose history is
    everything before it. The same fraction of the remaining prefix becomes one
    training sample, so training never sees evaluation-period events. A
    candidate's label is whether its event's action is in ``target_actions``.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigurationError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    targets = frozenset(target_actions)
    users: dict[str, LifecycleSequence] = {}
    train: list[TrainSample] = []
    evaluation: list[TrainSample] = []
    skipped = 0
    for user in sequences:
        n = user.length
        if n < MIN_EVENTS_PER_USER:
            skipped += 1
            continue
        users[user.user_id] = user
        eval_cut = max(1, math.floor(n * (1.0 - holdout_fraction)))
        train_cut = max(1, math.floor(eval_cut * (1.0 - holdout_fraction)))
        eval_sample = _window_sample(user, eval_cut, n, targets, max_candidates)
        train_sample = _window_sample(user, train_cut, eval_cut, targets, max_candidates)
        if eval_sample is not None:
            evaluation.append(eval_sample)
        if train_sample is not None:
            train.append(train_sample)
    if skipped:
        logger.info("temporal split skipped %d users with fewer than %d events", skipped, MIN_EVENTS_PER_USER)
    return InteractionDataset(users=users, train_samples=tuple(train), eval_samples=tuple(evaluation))


_SYNTHETIC_KEYS = {"seed", "users", "rank", "candidates", "samples", "eval"}


def parse_synthetic_source(source: str) -> dict[str, int]:
    """``synthetic:seed=S,users=U[,rank=R,candidates=M,samples=T,eval=E]`` -> keyword dict."""
    body = source.partition(":")[2]
    options: dict[str, int] = {}
    for part in filter(None, (p.strip() for p in body.split(","))):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in _SYNTHETIC_KEYS:
            raise ConfigurationError(f"bad synthetic source option {part!r}; known keys: {sorted(_SYNTHETIC_KEYS)}")
        try:
            options[key] = int(value)
        except ValueError as exc:
            raise ConfigurationError(f"synthetic option {key} must be an integer, got {value!r}") from exc
    return options


def resolve_data_source(source: str, config: ModelConfig) -> InteractionDataset:
    """Load a TSV log (temporally split) or generate planted synthetic data."""
    if source.startswith("synthetic:") or source == "synthetic":
        options = parse_synthetic_source(source)
        return synthesize_users(
            options.get("seed", 0),
            options.get("users", 64),
            config.vocab_size,
            options.get("rank", 2),
            num_scenarios=config.num_scenarios,
            candidates_per_sample=options.get("candidates", 8),
            train_samples_per_user=options.get("samples", 4),
            eval_samples_per_user=options.get("eval", 1),
        )
    report = load_events(Path(source), vocab_size=config.vocab_size, num_scenarios=config.num_scenarios)
    return temporal_split(report.sequences)

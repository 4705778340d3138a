"""Split a lifecycle sequence into fixed-budget behavior subsequences."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from climber.errors import ConfigurationError

from .models import (
    ACTION_INDEX,
    ACTIONS,
    PAD_ITEM,
    POSITIVE_ACTIONS,
    Action,
    ExtractionStrategy,
    LifecycleSequence,
    SubSequence,
    validate_strategy_set,
)

logger = logging.getLogger(__name__)

STRATEGY_PRESETS: dict[str, frozenset[Action]] = {
    "positive": POSITIVE_ACTIONS,
    "all": frozenset(ACTIONS),
    "click": frozenset({Action.CLICK}),
    "engaged": frozenset({Action.LIKE, Action.SHARE, Action.COMMENT}),
    "play": frozenset({Action.PLAY_FULL}),
    "skip": frozenset({Action.SKIP}),
}


def default_strategies(num_blocks: int, budget: int) -> tuple[ExtractionStrategy, ...]:
    """Preset strategies for ``num_blocks`` blocks, cycling through the presets."""
    if num_blocks < 1:
        raise ConfigurationError(f"num_blocks must be >= 1, got {num_blocks}")
    names = list(STRATEGY_PRESETS)
    strategies = []
    for idx in range(num_blocks):
        base = names[idx % len(names)]
        name = base if idx < len(names) else f"{base}_{idx // len(names)}"
        strategies.append(
            ExtractionStrategy(strategy_id=idx, name=name, action_filter=STRATEGY_PRESETS[base], budget=budget)
        )
    return tuple(strategies)


def extract(
    sequence: LifecycleSequence,
    strategy: ExtractionStrategy,
    *,
    max_budget: int | None = None,
) -> SubSequence:
    """Keep the ``budget`` most recent matching events, left-padded to ``budget``.

    Kept events stay in their original relative order. Padding slots hold item
    ``PAD_ITEM`` with zero action, timestamp and scenario.
    """
    budget = strategy.budget
    if max_budget is not None and budget > max_budget:
        raise ConfigurationError(f"strategy {strategy.name!r} budget {budget} exceeds maximum {max_budget}")

    matched = [idx for idx, event in enumerate(sequence.events) if strategy.matches(event)]
    kept = matched[-budget:]
    events = tuple(sequence.events[idx] for idx in kept)
    pad = budget - len(kept)

    item_ids = np.full(budget, PAD_ITEM, dtype=np.int64)
    action_ids = np.zeros(budget, dtype=np.int64)
    timestamps = np.zeros(budget, dtype=np.int64)
    scenario_ids = np.zeros(budget, dtype=np.int64)
    for slot, event in enumerate(events, start=pad):
        item_ids[slot] = event.item_id
        action_ids[slot] = ACTION_INDEX[event.action]
        timestamps[slot] = event.timestamp
        scenario_ids[slot] = event.scenario_id
    for array in (item_ids, action_ids, timestamps, scenario_ids):
        array.flags.writeable = False

    return SubSequence(
        strategy_id=strategy.strategy_id,
        budget=budget,
        valid_length=len(kept),
        item_ids=item_ids,
        action_ids=action_ids,
        timestamps=timestamps,
        scenario_ids=scenario_ids,
        events=events,
        source_indices=tuple(kept),
    )


def extract_all(
    sequence: LifecycleSequence,
    strategies: Sequence[ExtractionStrategy],
    *,
    max_budget: int | None = None,
) -> list[SubSequence]:
    """One subsequence per strategy, in strategy order."""
    validate_strategy_set(strategies)
    subsequences = [extract(sequence, s, max_budget=max_budget) for s in strategies]
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(
            "extracted user=%s lengths=%s",
            sequence.user_id,
            [sub.valid_length for sub in subsequences],
        )
    return subsequences

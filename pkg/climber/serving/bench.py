"""Cached versus naive per-candidate scoring throughput."""

from __future__ import annotations

import logging
import statistics
from time import perf_counter
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from climber.model import ModelConfig, Parameters, score
from climber.sequence import ACTIONS, Event, LifecycleSequence

from .cache import ScoringRequest, build_cache, score_with_cache

logger = logging.getLogger(__name__)

# desk-scale configuration the throughput gates are stated against
REFERENCE_CONFIG = ModelConfig(d_model=128, num_heads=4, budget=128, num_blocks=2, layers_per_block=2, vocab_size=1000)


class BenchRow(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    m: int
    cached_ips: float
    naive_ips: float
    speedup: float


def _time_pair(
    first: Callable[[], object], second: Callable[[], object], repetitions: int, warmup: int = 1
) -> tuple[list[float], list[float]]:
    """Interleaved wall-clock samples of two calls; the call order alternates every repetition."""
    for _ in range(warmup):
        first()
        second()
    samples: tuple[list[float], list[float]] = ([], [])
    for rep in range(repetitions):
        order = ((0, first), (1, second)) if rep % 2 == 0 else ((1, second), (0, first))
        for slot, fn in order:
            start = perf_counter()
            fn()
            samples[slot].append(perf_counter() - start)
    return samples


def bench_user(config: ModelConfig, seed: int = 0, user_id: str = "bench") -> LifecycleSequence:
    """Random history long enough to fill every block's budget under the preset filters."""
    rng = np.random.default_rng(seed)
    length = 4 * len(ACTIONS) * config.budget
    items = rng.integers(1, config.vocab_size, size=length)
    actions = rng.integers(0, len(ACTIONS), size=length)
    scenarios = rng.integers(0, config.num_scenarios, size=length)
    times = np.cumsum(rng.integers(1, 7200, size=length))
    events = tuple(
        Event(item_id=int(i), action=ACTIONS[a], timestamp=int(t), scenario_id=int(s))
        for i, a, t, s in zip(items, actions, times, scenarios)
    )
    return LifecycleSequence(user_id=user_id, events=events)


def bench_throughput(
    config: ModelConfig,
    m_values: Sequence[int],
    repetitions: int = 3,
    *,
    params: Parameters | None = None,
    seed: int = 0,
    warmup: int = 1,
) -> list[BenchRow]:
    """Median items/second of cached and naive scoring for each ``m``.

    Naive scores every candidate with its own uncached single-candidate
    forward. Cached builds the user's cache and scores all ``m`` candidates in
    one request; the cache build is inside the timed region. The two are timed
    alternately so drift in machine load affects both sides alike.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    params = params if params is not None else Parameters.initialize(config, seed)
    user = bench_user(config, seed)
    rng = np.random.default_rng(seed + 1)
    pool = [int(c) for c in rng.integers(1, config.vocab_size, size=max(m_values))]
    scenario = 0

    rows = []
    for m in m_values:
        candidates = pool[:m]
        request = ScoringRequest(user_id=user.user_id, candidates=tuple(candidates), scenario_id=scenario)

        def naive() -> None:
            for candidate in candidates:
                score(user, [candidate], scenario, params, config)

        def cached() -> None:
            score_with_cache(build_cache(user, scenario, params, config), request, params, config)

        naive_samples, cached_samples = _time_pair(naive, cached, repetitions, warmup)
        naive_s = statistics.median(naive_samples)
        cached_s = statistics.median(cached_samples)
        row = BenchRow(m=m, cached_ips=m / cached_s, naive_ips=m / naive_s, speedup=naive_s / cached_s)
        logger.info("bench m=%d cached=%.1f/s naive=%.1f/s speedup=%.2f", m, row.cached_ips, row.naive_ips, row.speedup)
        rows.append(row)
    return rows

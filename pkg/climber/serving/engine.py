"""In-memory cache store and the request-level serving facade."""

from __future__ import annotations

import logging
import threading
from collections import OrderedDict
from typing import Callable, Mapping

import numpy as np

from climber.errors import ConfigurationError
from climber.model import ClimberModel
from climber.sequence import LifecycleSequence

from .cache import DEFAULT_MAX_BATCH, KVCache, ScoringRequest, build_cache, score_with_cache

logger = logging.getLogger(__name__)

UserLookup = Callable[[str], LifecycleSequence]


class CacheStore:
    """Thread-safe LRU of :class:`KVCache` keyed by ``(user_id, scenario_id)``.

    Entries are immutable; ``put`` swaps the whole entry under the lock, so a
    reader sees either the old or the new cache.
    """

    def __init__(self, capacity: int = 1024) -> None:
        if capacity < 1:
            raise ConfigurationError(f"cache capacity must be >= 1, got {capacity}")
        self._capacity = capacity
        self._entries: OrderedDict[tuple[str, int], KVCache] = OrderedDict()
        self._lock = threading.RLock()
        self.hits = 0
        self.misses = 0

    @property
    def capacity(self) -> int:
        return self._capacity

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def __contains__(self, key: object) -> bool:
        with self._lock:
            return key in self._entries

    def get(self, user_id: str, scenario_id: int, *, param_digest: str, strategy_digest: str) -> KVCache | None:
        """Fresh cache for the key, or None; stale entries are dropped."""
        key = (user_id, scenario_id)
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                self.misses += 1
                return None
            if entry.param_digest != param_digest or entry.strategy_digest != strategy_digest:
                del self._entries[key]
                self.misses += 1
                logger.debug("dropped stale cache user=%s scenario=%d", user_id, scenario_id)
                return None
            self._entries.move_to_end(key)
            self.hits += 1
            return entry

    def put(self, cache: KVCache) -> None:
        key = (cache.user_id, cache.scenario_id)
        with self._lock:
            self._entries[key] = cache
            self._entries.move_to_end(key)
            while len(self._entries) > self._capacity:
                evicted, _ = self._entries.popitem(last=False)
                logger.debug("evicted cache user=%s scenario=%d", *evicted)

    def invalidate(self, user_id: str) -> int:
        with self._lock:
            keys = [key for key in self._entries if key[0] == user_id]
            for key in keys:
                del self._entries[key]
            return len(keys)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()


class ServingEngine:
    """Scores requests against cached user state, building caches on miss."""

    def __init__(
        self,
        model: ClimberModel,
        users: Mapping[str, LifecycleSequence] | UserLookup,
        *,
        capacity: int = 1024,
        max_batch: int = DEFAULT_MAX_BATCH,
    ) -> None:
        if not 1 <= max_batch <= DEFAULT_MAX_BATCH:
            raise ConfigurationError(f"max_batch must lie in [1, {DEFAULT_MAX_BATCH}], got {max_batch}")
        self.model = model
        self._lookup: UserLookup = users.__getitem__ if isinstance(users, Mapping) else users
        self.store = CacheStore(capacity)
        self.max_batch = max_batch

    def cache_for(self, user_id: str, scenario_id: int) -> KVCache:
        config, params = self.model.config, self.model.params
        cache = self.store.get(
            user_id, scenario_id, param_digest=params.digest(), strategy_digest=config.strategy_digest()
        )
        if cache is None:
            cache = build_cache(self._lookup(user_id), scenario_id, params, config)
            self.store.put(cache)
        return cache

    def score(self, request: ScoringRequest) -> np.ndarray:
        if len(request.candidates) > self.max_batch:
            raise ConfigurationError(f"request has {len(request.candidates)} candidates, limit is {self.max_batch}")
        cache = self.cache_for(request.user_id, request.scenario_id)
        return score_with_cache(cache, request, self.model.params, self.model.config)

    def invalidate(self, user_id: str) -> int:
        return self.store.invalidate(user_id)

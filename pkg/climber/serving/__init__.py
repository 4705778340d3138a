"""Batched candidate scoring with an encoder-level KV cache."""

from climber.model.masks import batch_masks, build_mask

from .bench import REFERENCE_CONFIG, BenchRow, bench_throughput, bench_user
from .cache import (
    DEFAULT_MAX_BATCH,
    BlockCache,
    KVCache,
    LayerCache,
    ScoringRequest,
    build_cache,
    score_with_cache,
)
from .engine import CacheStore, ServingEngine

__all__ = [
    "build_mask",
    "batch_masks",
    "ScoringRequest",
    "KVCache",
    "BlockCache",
    "LayerCache",
    "DEFAULT_MAX_BATCH",
    "build_cache",
    "score_with_cache",
    "CacheStore",
    "ServingEngine",
    "BenchRow",
    "REFERENCE_CONFIG",
    "bench_throughput",
    "bench_user",
]

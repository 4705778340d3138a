"""Bucketed relative position and time-delta attention bias."""

from __future__ import annotations

import math

import numpy as np

from climber.numerics import Tensor, add, take, transpose

# Upper edges (exclusive, seconds) of the time-delta buckets after the zero bucket:
# {0}, (0, 1m), [1m, 1h), [1h, 1d), [1d, 1w), [1w, 30d), >= 30d
TIME_BOUNDARIES = np.array([1, 60, 3600, 86400, 7 * 86400, 30 * 86400], dtype=np.int64)


def position_bucket(offset: np.ndarray | int, num_buckets: int = 32, max_distance: int = 128) -> np.ndarray:
    """Symmetric log-spaced bucket of a signed position offset ``i - j``.

    Half the buckets cover non-positive offsets and half positive ones. Within
    each half, small distances get their own bucket and larger ones share
    logarithmically wider buckets, saturating at ``max_distance``.
    """
    offset = np.asarray(offset, dtype=np.int64)
    half = num_buckets // 2
    buckets = np.where(offset > 0, half, 0)
    distance = np.abs(offset)
    max_exact = max(1, half // 2)
    is_small = distance < max_exact
    with np.errstate(divide="ignore"):
        scaled = np.log(np.maximum(distance, 1) / max_exact) / math.log(max(max_distance, max_exact + 1) / max_exact)
    large = max_exact + (scaled * (half - max_exact)).astype(np.int64)
    large = np.minimum(large, half - 1)
    return buckets + np.where(is_small, distance, large)


def time_bucket(delta_seconds: np.ndarray | int) -> np.ndarray:
    """Bucket index in ``[0, 7)`` of the absolute time delta in seconds."""
    delta = np.abs(np.asarray(delta_seconds, dtype=np.int64))
    return np.searchsorted(TIME_BOUNDARIES, delta, side="right")


def row_positions(budget: int, num_candidates: int) -> np.ndarray:
    """History slots sit at ``0..n_k-1``; every candidate sits at ``n_k``."""
    return np.concatenate([np.arange(budget), np.full(num_candidates, budget)]).astype(np.int64)


def relative_bias(
    b_pos: Tensor,
    b_time: Tensor,
    query_positions: np.ndarray,
    key_positions: np.ndarray,
    query_times: np.ndarray,
    key_times: np.ndarray,
    *,
    num_buckets: int,
    max_distance: int,
) -> Tensor:
    """Bias of shape ``(..., h, q, k)``.

    ``bias[..., head, i, j] = b_pos[head, bucket_p(pos_i - pos_j)]
    + b_time[head, bucket_t(t_i - t_j)]``. Positions are shared across the
    batch; times may carry leading batch axes. Masking happens in the softmax.
    """
    pos_idx = position_bucket(query_positions[:, None] - key_positions[None, :], num_buckets, max_distance)
    pos_bias = take(b_pos, pos_idx, axis=1)  # (h, q, k)

    query_times = np.asarray(query_times, dtype=np.int64)
    key_times = np.asarray(key_times, dtype=np.int64)
    time_idx = time_bucket(query_times[..., :, None] - key_times[..., None, :])  # (..., q, k)
    time_bias = take(b_time, time_idx, axis=1)  # (h, ..., q, k)
    if time_idx.ndim > 2:
        lead = time_idx.ndim - 2
        axes = list(range(1, lead + 1)) + [0, lead + 1, lead + 2]
        time_bias = transpose(time_bias, axes)
    return add(time_bias, pos_bias)

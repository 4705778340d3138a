"""Attention masks for "single user, multiple items" batches."""

from __future__ import annotations

import numpy as np


def build_mask(n_valid_history: int, num_candidates: int, budget: int | None = None) -> np.ndarray:
    """Boolean ``(n_k + m) x (n_k + m)`` mask, True = attend.

    History occupies the last ``n_valid_history`` of ``budget`` left-padded
    slots (``budget`` defaults to ``n_valid_history``). Valid history rows see
    all valid history; each candidate sees all valid history and itself only;
    pad rows and columns are closed.
    """
    if num_candidates < 1:
        raise ValueError(f"at least one candidate is required, got {num_candidates}")
    budget = n_valid_history if budget is None else budget
    if not 0 <= n_valid_history <= budget:
        raise ValueError(f"valid history {n_valid_history} outside budget {budget}")
    size = budget + num_candidates
    valid = np.zeros(size, dtype=bool)
    valid[budget - n_valid_history : budget] = True

    mask = np.zeros((size, size), dtype=bool)
    mask[:budget, :budget] = valid[:budget, None] & valid[None, :budget]
    mask[budget:, :budget] = valid[None, :budget]
    mask[budget:, budget:] = np.eye(num_candidates, dtype=bool)
    return mask


def batch_masks(valid_lengths: np.ndarray, budget: int, num_candidates: int) -> np.ndarray:
    """Stacked masks ``(B, n_k + m, n_k + m)`` for per-sample valid lengths."""
    return np.stack([build_mask(int(v), num_candidates, budget) for v in valid_lengths])

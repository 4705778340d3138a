"""Training objective and ranking metric."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from climber.errors import DimensionError, UndefinedMetricError
from climber.numerics import Tensor, bce_with_logits


def loss(logits: Tensor | np.ndarray | Sequence[float], labels: np.ndarray | Sequence[int]) -> Tensor:
    """Mean sigmoid cross-entropy, ``mean(log(1 + e^z) - y z)``."""
    labels = np.asarray(labels, dtype=np.float64)
    if isinstance(logits, Tensor):
        return bce_with_logits(logits, labels)
    return bce_with_logits(np.asarray(logits, dtype=np.float64), labels)


def auc(scores: np.ndarray | Sequence[float], labels: np.ndarray | Sequence[int]) -> float:
    """Probability that a random positive outscores a random negative (ties count half).

    Computed from the rank-sum statistic with average ranks for tied scores.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise DimensionError(f"auc: {scores.size} scores but {labels.size} labels")
    positives = labels == 1
    num_pos = int(positives.sum())
    num_neg = int(labels.size - num_pos)
    if num_pos == 0 or num_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative label")

    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    average_rank = np.cumsum(counts) - (counts - 1) / 2.0
    ranks = average_rank[inverse.reshape(-1)]
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - num_pos * (num_pos + 1) / 2.0) / (num_pos * num_neg)

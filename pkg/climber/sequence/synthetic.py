"""Planted synthetic interaction data with a known preference model."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from climber.errors import ConfigurationError

from .models import Action, Event, InteractionDataset, LifecycleSequence, TrainSample

logger = logging.getLogger(__name__)

_POSITIVE_KINDS = (Action.PLAY_FULL, Action.LIKE, Action.SHARE, Action.COMMENT)
_POSITIVE_WEIGHTS = np.array([0.55, 0.25, 0.10, 0.10])
_NEGATIVE_KINDS = (Action.CLICK, Action.SKIP)
_MEAN_GAP_SECONDS = 6 * 3600


@dataclass(frozen=True)
class SyntheticDataset(InteractionDataset):
    """Interaction dataset plus the latent factors that generated it."""

    user_factors: np.ndarray = None  # type: ignore[assignment]
    item_factors: np.ndarray = None  # type: ignore[assignment]
    user_index: dict[str, int] = None  # type: ignore[assignment]

    def oracle_scores(self, sample: TrainSample) -> np.ndarray:
        """Bayes-optimal scores: latent affinity between the user and each candidate."""
        user = self.user_factors[self.user_index[sample.user_id]]
        return self.item_factors[np.asarray(sample.candidates)] @ user


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    return matrix / np.where(norms > 0, norms, 1.0)


def synthesize_users(
    seed: int,
    num_users: int,
    vocab: int,
    planted_preference_rank: int = 2,
    *,
    num_scenarios: int = 3,
    events_per_user: tuple[int, int] = (60, 120),
    candidates_per_sample: int = 8,
    train_samples_per_user: int = 4,
    eval_samples_per_user: int = 1,
    sharpness: float = 4.0,
    label_noise: float = 0.01,
) -> SyntheticDataset:
    """Generate users whose histories and labels share one latent preference.

    Users and items get unit latent vectors of width ``planted_preference_rank``.
    History items are drawn with probability proportional to
    ``exp(sharpness * u.v)`` and turn into positive actions with probability
    ``sigmoid(sharpness * u.v)``. A candidate's label is ``u.v > 0`` flipped
    with probability ``label_noise``. Each user yields
    ``train_samples_per_user`` training samples and ``eval_samples_per_user``
    evaluation samples.
    Item id 0 is the pad item and never appears.
    """
    if vocab < 100:
        raise ConfigurationError(f"synthetic vocabulary must be >= 100, got {vocab}")
    if num_users < 1 or planted_preference_rank < 1:
        raise ConfigurationError("num_users and planted_preference_rank must be positive")
    low, high = events_per_user
    if not 1 <= low <= high:
        raise ConfigurationError(f"invalid events_per_user range {events_per_user}")
    if not 1 <= candidates_per_sample < vocab:
        raise ConfigurationError(f"candidates_per_sample must lie in [1, {vocab - 1}]")
    if train_samples_per_user < 0 or eval_samples_per_user < 0:
        raise ConfigurationError("sample counts per user must be non-negative")

    rng = np.random.default_rng(seed)
    item_factors = _unit_rows(rng.normal(size=(vocab, planted_preference_rank)))
    item_factors[0] = 0.0
    user_factors = _unit_rows(rng.normal(size=(num_users, planted_preference_rank)))
    real_items = np.arange(1, vocab)

    users: dict[str, LifecycleSequence] = {}
    train: list[TrainSample] = []
    evaluation: list[TrainSample] = []
    for u in range(num_users):
        user_id = f"u{u:05d}"
        affinity = item_factors[1:] @ user_factors[u]
        logits = sharpness * affinity
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()

        length = int(rng.integers(low, high + 1))
        items = rng.choice(real_items, size=length, p=probs)
        item_affinity = item_factors[items] @ user_factors[u]
        positive = rng.random(length) < 1.0 / (1.0 + np.exp(-sharpness * item_affinity))
        positive_kind = rng.choice(len(_POSITIVE_KINDS), size=length, p=_POSITIVE_WEIGHTS)
        negative_kind = rng.integers(0, len(_NEGATIVE_KINDS), size=length)
        scenarios = rng.integers(0, num_scenarios, size=length)
        gaps = rng.exponential(_MEAN_GAP_SECONDS, size=length).astype(np.int64) + 1
        timestamps = int(rng.integers(0, 1_000_000)) + np.cumsum(gaps)
        scores = 1.0 / (1.0 + np.exp(-(sharpness * item_affinity + rng.normal(scale=0.5, size=length))))

        events = tuple(
            Event(
                item_id=int(items[i]),
                action=_POSITIVE_KINDS[positive_kind[i]] if positive[i] else _NEGATIVE_KINDS[negative_kind[i]],
                timestamp=int(timestamps[i]),
                scenario_id=int(scenarios[i]),
                score=round(float(scores[i]), 6),
            )
            for i in range(length)
        )
        users[user_id] = LifecycleSequence(user_id=user_id, events=events)

        for j in range(train_samples_per_user + eval_samples_per_user):
            candidates = rng.choice(real_items, size=candidates_per_sample, replace=False)
            aligned = item_factors[candidates] @ user_factors[u] > 0
            flips = rng.random(candidates_per_sample) < label_noise
            labels = np.logical_xor(aligned, flips).astype(int)
            sample = TrainSample(
                user_id=user_id,
                scenario_id=int(rng.integers(0, num_scenarios)),
                candidates=tuple(int(c) for c in candidates),
                labels=tuple(int(y) for y in labels),
            )
            (train if j < train_samples_per_user else evaluation).append(sample)

    logger.debug("synthesized %d users, %d train and %d eval samples", num_users, len(train), len(evaluation))
    return SyntheticDataset(
        users=users,
        train_samples=tuple(train),
        eval_samples=tuple(evaluation),
        user_factors=user_factors,
        item_factors=item_factors,
        user_index={user_id: idx for idx, user_id in enumerate(users)},
    )

"""End-to-end scoring path: extraction, embedding, blocks, fusion and head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from climber.errors import VocabularyError
from climber.numerics import Tensor, add, concat, mul, reshape, slice_axis, take
from climber.sequence import LifecycleSequence, SubSequence, extract_all

from .bias import relative_bias, row_positions
from .config import ModelConfig
from .layers import atl_forward, bgf_forward, head_logits, stack_blocks
from .masks import batch_masks
from .params import Parameters


@dataclass(frozen=True)
class BlockInputs:
    """Left-padded history arrays of one block for a batch, each ``(B, n_k)``."""

    item_ids: np.ndarray
    action_ids: np.ndarray
    timestamps: np.ndarray
    scenario_ids: np.ndarray
    valid_lengths: np.ndarray

    @property
    def valid_mask(self) -> np.ndarray:
        budget = self.item_ids.shape[1]
        return np.arange(budget)[None, :] >= (budget - self.valid_lengths)[:, None]

    @classmethod
    def from_subsequences(cls, subs: Sequence[SubSequence]) -> "BlockInputs":
        return cls(
            item_ids=np.stack([s.item_ids for s in subs]),
            action_ids=np.stack([s.action_ids for s in subs]),
            timestamps=np.stack([s.timestamps for s in subs]),
            scenario_ids=np.stack([s.scenario_ids for s in subs]),
            valid_lengths=np.array([s.valid_length for s in subs], dtype=np.int64),
        )


@dataclass(frozen=True)
class RequestBatch:
    """``B`` "single user, multiple items" requests with the same candidate count ``m``."""

    blocks: tuple[BlockInputs, ...]
    candidates: np.ndarray
    scenarios: np.ndarray
    request_times: np.ndarray

    @property
    def size(self) -> int:
        return int(self.candidates.shape[0])

    @property
    def num_candidates(self) -> int:
        return int(self.candidates.shape[1])


def _check_ids(config: ModelConfig, candidates: np.ndarray, scenarios: np.ndarray, blocks: Sequence[BlockInputs]) -> None:
    if candidates.size and (candidates.min() < 0 or candidates.max() >= config.vocab_size):
        raise VocabularyError(f"candidate item ids must lie in [0, {config.vocab_size})")
    if scenarios.size and (scenarios.min() < 0 or scenarios.max() >= config.num_scenarios):
        raise VocabularyError(f"scenario ids must lie in [0, {config.num_scenarios})")
    for block in blocks:
        if block.item_ids.max(initial=0) >= config.vocab_size:
            raise VocabularyError(f"history item id outside vocabulary of size {config.vocab_size}")
        if block.action_ids.max(initial=0) >= config.num_actions:
            raise VocabularyError(f"action id outside {config.num_actions} actions")
        if block.scenario_ids.max(initial=0) >= config.num_scenarios:
            raise VocabularyError(f"history scenario id outside {config.num_scenarios} scenarios")


def prepare_batch(
    config: ModelConfig,
    subsequences: Sequence[Sequence[SubSequence]],
    candidates: Sequence[Sequence[int]],
    scenarios: Sequence[int],
    request_times: Sequence[int],
) -> RequestBatch:
    """Stack pre-extracted per-request subsequences into a batch."""
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.ndim != 2 or cand.shape[1] < 1:
        raise ValueError("every request needs the same non-zero number of candidates")
    blocks = tuple(
        BlockInputs.from_subsequences([subs[k] for subs in subsequences]) for k in range(config.num_blocks)
    )
    scen = np.asarray(scenarios, dtype=np.int64)
    _check_ids(config, cand, scen, blocks)
    return RequestBatch(
        blocks=blocks,
        candidates=cand,
        scenarios=scen,
        request_times=np.asarray(request_times, dtype=np.int64),
    )


def batch_for_users(
    config: ModelConfig,
    users: Sequence[LifecycleSequence],
    candidates: Sequence[Sequence[int]],
    scenarios: Sequence[int],
    request_times: Sequence[int | None] | None = None,
) -> RequestBatch:
    strategies = config.strategy_set()
    times = [None] * len(users) if request_times is None else list(request_times)
    return prepare_batch(
        config,
        [extract_all(user, strategies) for user in users],
        candidates,
        scenarios,
        [user.last_timestamp if t is None else t for user, t in zip(users, times)],
    )


def embed_history(params: Parameters, block: BlockInputs) -> Tensor:
    """History rows ``item + action + scenario`` with pad rows zeroed, ``(B, n_k, d)``."""
    rows = add(
        add(take(params["item_emb"], block.item_ids), take(params["action_emb"], block.action_ids)),
        take(params["scenario_emb"], block.scenario_ids),
    )
    return mul(rows, block.valid_mask[..., None].astype(np.float64))


def embed_candidates(params: Parameters, candidates: np.ndarray, scenarios: np.ndarray) -> Tensor:
    """Candidate rows ``item + request scenario``, ``(B, m, d)``."""
    return add(take(params["item_emb"], candidates), take(params["scenario_emb"], scenarios[:, None]))


def embed_block(params: Parameters, block: BlockInputs, candidates: np.ndarray, scenarios: np.ndarray) -> Tensor:
    return concat([embed_history(params, block), embed_candidates(params, candidates, scenarios)], axis=1)


def embed(
    params: Parameters,
    config: ModelConfig,
    sub: SubSequence,
    candidates: Sequence[int],
    scenario: int,
) -> Tensor:
    """Rows ``X(S_k)`` of shape ``(n_k + m, d)`` for one subsequence and its candidates."""
    if len(candidates) < 1:
        raise ValueError("at least one candidate is required")
    block = BlockInputs.from_subsequences([sub])
    cand = np.asarray([candidates], dtype=np.int64)
    scen = np.asarray([scenario], dtype=np.int64)
    _check_ids(config, cand, scen, [block])
    x = embed_block(params, block, cand, scen)
    return reshape(x, x.shape[1:])


def block_bias(
    params: Parameters,
    config: ModelConfig,
    block_index: int,
    block: BlockInputs,
    num_candidates: int,
    request_times: np.ndarray,
) -> Tensor | None:
    if not config.use_relative_bias:
        return None
    positions = row_positions(config.budget, num_candidates)
    times = np.concatenate(
        [block.timestamps, np.repeat(request_times[:, None], num_candidates, axis=1)], axis=1
    )
    return relative_bias(
        params[f"block{block_index}.b_pos"],
        params[f"block{block_index}.b_time"],
        positions,
        positions,
        times,
        times,
        num_buckets=config.position_buckets,
        max_distance=config.max_distance,
    )


def block_forward(params: Parameters, config: ModelConfig, batch: RequestBatch, block_index: int) -> Tensor:
    """Stacked layers of one block; returns candidate-row outputs ``E(S_k)`` of shape ``(B, m, d)``."""
    block = batch.blocks[block_index]
    m = batch.num_candidates
    x = embed_block(params, block, batch.candidates, batch.scenarios)
    mask = batch_masks(block.valid_lengths, config.budget, m)
    bias = block_bias(params, config, block_index, block, m, batch.request_times)
    for layer in range(config.layers_per_block):
        x = atl_forward(
            params, config, x, block=block_index, layer=layer, scenarios=batch.scenarios, mask=mask, bias=bias
        )
    return slice_axis(x, config.budget, config.budget + m, axis=1)


def fuse_and_score(
    params: Parameters,
    config: ModelConfig,
    block_outputs: list[Tensor],
    scenarios: np.ndarray,
) -> Tensor:
    """Fusion (or plain concatenation when BGF is off) followed by the head; ``(B, m)`` logits."""
    if config.use_bgf:
        fused = bgf_forward(params, config, stack_blocks(block_outputs), scenarios)
    else:
        fused = concat(block_outputs, axis=-1)
    return head_logits(params, fused)


def forward_logits(params: Parameters, config: ModelConfig, batch: RequestBatch) -> Tensor:
    outputs = [block_forward(params, config, batch, k) for k in range(config.num_blocks)]
    return fuse_and_score(params, config, outputs, batch.scenarios)


def score(
    user: LifecycleSequence,
    candidates: Sequence[int],
    scenario: int,
    params: Parameters,
    config: ModelConfig,
    *,
    request_time: int | None = None,
) -> np.ndarray:
    """Logits for ``m`` candidates of one user, uncached."""
    if len(candidates) < 1:
        raise ValueError("at least one candidate is required")
    batch = batch_for_users(config, [user], [list(candidates)], [scenario], [request_time])
    return forward_logits(params, config, batch).numpy()[0]


class ClimberModel:
    """Config plus parameters, with convenience scoring."""

    def __init__(self, config: ModelConfig, params: Parameters | None = None, *, seed: int = 0) -> None:
        self.config = config
        self.params = params if params is not None else Parameters.initialize(config, seed)
        self.params.check_shapes(config)

    def score(
        self,
        user: LifecycleSequence,
        candidates: Sequence[int],
        scenario: int = 0,
        *,
        request_time: int | None = None,
    ) -> np.ndarray:
        return score(user, candidates, scenario, self.params, self.config, request_time=request_time)

    def logits(self, batch: RequestBatch) -> Tensor:
        return forward_logits(self.params, self.config, batch)

    def digest(self) -> str:
        return self.params.digest()

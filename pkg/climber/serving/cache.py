"""Encoder-level KV cache: build once per user history, score many candidates."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from climber.errors import StaleCacheError
from climber.model import LayerWeights, ModelConfig, Parameters, fuse_and_score, layer_temperature, relative_bias
from climber.model.layers import attend, check_finite, output_and_ffn, project_qkv
from climber.model.network import BlockInputs, embed_candidates, embed_history
from climber.model.params import layer_prefix
from climber.numerics import Tensor, add, concat, flop_scope, matmul, mul, slice_axis, softmax_rows, sum_
from climber.sequence import LifecycleSequence, extract_all

logger = logging.getLogger(__name__)

DEFAULT_MAX_BATCH = 1024


class ScoringRequest(BaseModel):
    """One user, ``m`` candidate items, one scenario."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    user_id: str = Field(min_length=1)
    candidates: tuple[int, ...] = Field(min_length=1, max_length=DEFAULT_MAX_BATCH)
    scenario_id: int = Field(default=0, ge=0)
    request_time: Optional[int] = Field(default=None, ge=0)


@dataclass(frozen=True)
class LayerCache:
    """History rows entering one layer, that layer's keys/values ``(h, n_k, d_h)`` and its temperature."""

    inputs: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    temperature: float | np.ndarray


@dataclass(frozen=True)
class BlockCache:
    valid_length: int
    timestamps: np.ndarray
    layers: tuple[LayerCache, ...]
    # candidate row against history and itself at the user's last timestamp, (h, 1, n_k + 1)
    candidate_bias: np.ndarray | None = None

    @property
    def valid_mask(self) -> np.ndarray:
        budget = self.timestamps.shape[0]
        return np.arange(budget) >= budget - self.valid_length


@dataclass(frozen=True)
class KVCache:
    """Per-block, per-layer history state of one user under one scenario.

    Independent of any candidate set. Keyed by the parameter, strategy-set and
    config digests it was built under; scoring with anything else is refused.
    """

    user_id: str
    scenario_id: int
    last_timestamp: int
    param_digest: str
    strategy_digest: str
    config_digest: str
    blocks: tuple[BlockCache, ...]

    def matches(self, params: Parameters, config: ModelConfig) -> bool:
        return (
            self.param_digest == params.digest()
            and self.strategy_digest == config.strategy_digest()
            and self.config_digest == config.digest()
        )


def _readonly(array: np.ndarray) -> np.ndarray:
    out = np.array(array, copy=True)
    out.flags.writeable = False
    return out


def build_cache(user: LifecycleSequence, scenario: int, params: Parameters, config: ModelConfig) -> KVCache:
    """Run every block over history rows only and keep each layer's inputs, K and V."""
    scenarios = np.array([scenario], dtype=np.int64)
    blocks = []
    for k, sub in enumerate(extract_all(user, config.strategy_set())):
        inputs = BlockInputs.from_subsequences([sub])
        valid = inputs.valid_mask[0]
        mask = (valid[:, None] & valid[None, :])[None, None]
        bias = None
        if config.use_relative_bias:
            positions = np.arange(config.budget)
            bias = relative_bias(
                params[f"block{k}.b_pos"],
                params[f"block{k}.b_time"],
                positions,
                positions,
                inputs.timestamps,
                inputs.timestamps,
                num_buckets=config.position_buckets,
                max_distance=config.max_distance,
            )
        x = embed_history(params, inputs)
        layers = []
        for i in range(config.layers_per_block):
            weights = LayerWeights.from_params(params, layer_prefix(k, i))
            q, keys, values = project_qkv(x, weights, config.num_heads)
            tau = layer_temperature(params, config, k, i, scenarios)
            attended = attend(q, keys, values, temperature=tau, mask=mask, bias=bias)
            layers.append(
                LayerCache(
                    inputs=_readonly(x.data[0]),
                    keys=_readonly(keys.data[0]),
                    values=_readonly(values.data[0]),
                    temperature=tau if isinstance(tau, float) else _readonly(tau.data),
                )
            )
            x = output_and_ffn(x, attended, weights, config.activation)
            check_finite(x, block=k, layer=i)
        candidate_bias = None
        if config.use_relative_bias:
            candidate_bias = _readonly(_candidate_bias(params, config, k, sub.timestamps, user.last_timestamp))
        blocks.append(
            BlockCache(
                valid_length=sub.valid_length,
                timestamps=_readonly(sub.timestamps),
                layers=tuple(layers),
                candidate_bias=candidate_bias,
            )
        )
    logger.debug("built cache user=%s scenario=%d blocks=%d", user.user_id, scenario, len(blocks))
    return KVCache(
        user_id=user.user_id,
        scenario_id=scenario,
        last_timestamp=user.last_timestamp,
        param_digest=params.digest(),
        strategy_digest=config.strategy_digest(),
        config_digest=config.digest(),
        blocks=tuple(blocks),
    )


def _candidate_bias(
    params: Parameters,
    config: ModelConfig,
    block_index: int,
    timestamps: np.ndarray,
    request_time: int,
) -> np.ndarray:
    """Bias of one candidate row against the history and against itself, ``(h, 1, n_k + 1)``.

    Every candidate sits at position ``n_k`` with the request time, so the row
    is shared by all candidates of a request.
    """
    budget = config.budget
    key_positions = np.arange(budget + 1)
    key_times = np.append(np.asarray(timestamps, dtype=np.int64), request_time)
    bias = relative_bias(
        params[f"block{block_index}.b_pos"],
        params[f"block{block_index}.b_time"],
        np.array([budget]),
        key_positions,
        np.array([request_time], dtype=np.int64),
        key_times,
        num_buckets=config.position_buckets,
        max_distance=config.max_distance,
    )
    return bias.data


def score_with_cache(
    cache: KVCache,
    request: ScoringRequest,
    params: Parameters,
    config: ModelConfig,
) -> np.ndarray:
    """Logits for ``request.candidates`` computed against cached history state.

    Each candidate attends to cached history keys/values plus its own key and
    value, which reproduces the diagonal-masked uncached forward.
    """
    if not cache.matches(params, config):
        raise StaleCacheError(f"cache for user {cache.user_id} was built with different parameters or strategies")
    if cache.user_id != request.user_id:
        raise StaleCacheError(f"cache belongs to user {cache.user_id}, request is for {request.user_id}")
    if cache.scenario_id != request.scenario_id:
        raise StaleCacheError(
            f"cache was built for scenario {cache.scenario_id}, request uses {request.scenario_id}"
        )

    candidates = np.asarray([request.candidates], dtype=np.int64)
    scenarios = np.array([request.scenario_id], dtype=np.int64)
    budget = config.budget
    request_time = cache.last_timestamp if request.request_time is None else request.request_time

    outputs = []
    for k, block in enumerate(cache.blocks):
        key_mask = np.concatenate([block.valid_mask, [True]])[None, None, None, :]
        bias = None
        if config.use_relative_bias:
            if request_time == cache.last_timestamp and block.candidate_bias is not None:
                bias = Tensor(block.candidate_bias)
            else:
                bias = Tensor(_candidate_bias(params, config, k, block.timestamps, request_time))
        x = embed_candidates(params, candidates, scenarios)
        for i, layer in enumerate(block.layers):
            weights = LayerWeights.from_params(params, layer_prefix(k, i))
            q, own_key, own_value = project_qkv(x, weights, config.num_heads)
            with flop_scope("attention_scores"):
                history_scores = matmul(q, np.swapaxes(layer.keys, -1, -2))
            own_scores = sum_(mul(q, own_key), axis=-1, keepdims=True)
            scores = concat([history_scores, own_scores], axis=-1)
            if bias is not None:
                scores = add(scores, bias)
            tau = layer.temperature if isinstance(layer.temperature, float) else Tensor(layer.temperature)
            attn = softmax_rows(scores, tau, key_mask)
            with flop_scope("attention_values"):
                attended = add(
                    matmul(slice_axis(attn, 0, budget), layer.values),
                    mul(slice_axis(attn, budget, budget + 1), own_value),
                )
            x = output_and_ffn(x, attended, weights, config.activation)
            check_finite(x, block=k, layer=i)
        outputs.append(x)
    return fuse_and_score(params, config, outputs, scenarios).numpy()[0]

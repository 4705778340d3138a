"""Model configuration with ablation switches."""

from __future__ import annotations

import hashlib
import json
import math
from functools import lru_cache
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from climber.sequence import ACTIONS, ExtractionStrategy, default_strategies, strategy_set_digest

TIME_BUCKET_COUNT = 7


class ModelConfig(BaseModel):
    """Dimensions, ablation flags and the extraction strategy set.

    ``strategies`` may be left empty, in which case :meth:`strategy_set`
    returns the preset strategies for ``num_blocks`` blocks of ``budget``.
    Flags map to the ablation rows: all on is the full model,
    ``use_bgf=False`` drops fusion, and additionally turning off
    ``use_adaptive_temperature`` and ``use_relative_bias`` gives the plain
    attention stack.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    d_model: int = Field(default=16, gt=0)
    num_heads: int = Field(default=2, gt=0)
    layers_per_block: int = Field(default=2, gt=0)
    num_blocks: int = Field(default=2, gt=0)
    budget: int = Field(default=8, gt=0)
    num_scenarios: int = Field(default=3, gt=0)
    vocab_size: int = Field(default=200, gt=1)
    num_actions: int = Field(default=len(ACTIONS), gt=0)
    position_buckets: int = Field(default=32, ge=2)
    max_distance: int = Field(default=128, gt=0)
    time_buckets: int = Field(default=TIME_BUCKET_COUNT, ge=TIME_BUCKET_COUNT, le=TIME_BUCKET_COUNT)
    ffn_multiplier: int = Field(default=4, gt=0)
    gate_reduction: int = Field(default=2, gt=0)
    activation: Literal["silu", "relu"] = "silu"
    init_std: float = Field(default=0.02, gt=0.0)
    use_adaptive_temperature: bool = True
    use_bgf: bool = True
    use_relative_bias: bool = True
    strategies: tuple[ExtractionStrategy, ...] = ()

    @model_validator(mode="after")
    def _validate_shapes(self) -> "ModelConfig":
        if self.d_model % self.num_heads:
            raise ValueError(f"d_model {self.d_model} must be divisible by num_heads {self.num_heads}")
        if self.position_buckets % 2:
            raise ValueError("position_buckets must be even (half per direction)")
        if (self.num_blocks * self.d_model) % self.gate_reduction:
            raise ValueError("num_blocks * d_model must be divisible by gate_reduction")
        if self.num_actions < len(ACTIONS):
            raise ValueError(f"num_actions must cover the {len(ACTIONS)} known actions")
        if self.strategies:
            if len(self.strategies) != self.num_blocks:
                raise ValueError(f"{len(self.strategies)} strategies declared for {self.num_blocks} blocks")
            budgets = {s.budget for s in self.strategies}
            if budgets != {self.budget}:
                raise ValueError(f"every strategy budget must equal budget={self.budget}, got {sorted(budgets)}")
        return self

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    @property
    def base_temperature(self) -> float:
        return math.sqrt(self.d_model / self.num_heads)

    @property
    def ffn_width(self) -> int:
        return self.ffn_multiplier * self.d_model

    @property
    def fused_width(self) -> int:
        return self.num_blocks * self.d_model

    @property
    def gate_width(self) -> int:
        return self.fused_width // self.gate_reduction

    @property
    def total_budget(self) -> int:
        """n = N_b * n_k, the total history length seen by the network."""
        return self.num_blocks * self.budget

    def strategy_set(self) -> tuple[ExtractionStrategy, ...]:
        if self.strategies:
            return self.strategies
        return default_strategies(self.num_blocks, self.budget)

    def strategy_digest(self) -> str:
        return _strategy_digest(self)

    def digest(self) -> str:
        """Stable sha256 over every field, strategies in canonical form."""
        return _config_digest(self)

    def variant(self, **changes: object) -> "ModelConfig":
        """Validated copy with ``changes`` applied."""
        data = self.model_dump()
        data.update(changes)
        if "strategies" not in changes and self.strategies:
            if data["num_blocks"] != self.num_blocks:
                data["strategies"] = ()
            elif data["budget"] != self.budget:
                data["strategies"] = tuple(s.model_copy(update={"budget": data["budget"]}) for s in self.strategies)
        return ModelConfig.model_validate(data)


# configs are frozen, so digests are memoized per value
@lru_cache(maxsize=256)
def _config_digest(config: ModelConfig) -> str:
    payload = config.model_dump(mode="json", exclude={"strategies"})
    payload["strategies"] = [s.canonical() for s in config.strategy_set()]
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(encoded.encode("utf-8")).hexdigest()


@lru_cache(maxsize=256)
def _strategy_digest(config: ModelConfig) -> str:
    return strategy_set_digest(config.strategy_set())


def transformer_baseline(config: ModelConfig) -> ModelConfig:
    """Plain attention stack over one all-actions sequence of the same total length."""
    budget = config.total_budget
    strategy = ExtractionStrategy(strategy_id=0, name="all", action_filter=frozenset(ACTIONS), budget=budget)
    return config.variant(
        num_blocks=1,
        budget=budget,
        strategies=(strategy,),
        use_adaptive_temperature=False,
        use_relative_bias=False,
        use_bgf=False,
    )


ABLATION_VARIANTS = ("transformer", "minus_atl_bgf", "minus_bgf", "climber")


def ablation_variant(config: ModelConfig, name: str) -> ModelConfig:
    """Config for one ablation row, in nesting order of :data:`ABLATION_VARIANTS`."""
    if name == "transformer":
        return transformer_baseline(config)
    if name == "minus_atl_bgf":
        return config.variant(use_adaptive_temperature=False, use_relative_bias=False, use_bgf=False)
    if name == "minus_bgf":
        return config.variant(use_adaptive_temperature=True, use_relative_bias=True, use_bgf=False)
    if name == "climber":
        return config.variant(use_adaptive_temperature=True, use_relative_bias=True, use_bgf=True)
    raise ValueError(f"unknown ablation variant {name!r}; expected one of {ABLATION_VARIANTS}")

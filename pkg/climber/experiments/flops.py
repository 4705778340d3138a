"""Static and instrumented FLOP accounting (2 FLOPs per multiply-add)."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from climber.errors import ConfigurationError
from climber.model import ModelConfig, Parameters, batch_for_users, forward_logits
from climber.numerics import FlopCounter
from climber.serving import bench_user

COMPONENTS = (
    "embedding",
    "projections",
    "attention_scores",
    "attention_values",
    "ffn",
    "fusion",
    "gate",
    "head",
)


class FlopsReport(BaseModel):
    """Per-component FLOPs of one forward pass for one user and one candidate.

    ``dominant_term = kappa * s * l`` with ``s`` the total history length
    ``N_b * n_k``, ``l`` the layers per block and ``kappa`` the per-token,
    per-layer cost of the projections and FFN. ``constant_overhead`` is
    everything the dominant term leaves out.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    components: dict[str, int]
    total: int
    history_attention_scores: int
    kappa: int
    sequence_length: int
    layers: int
    dominant_term: int
    constant_overhead: int

    @model_validator(mode="after")
    def _validate_totals(self) -> "FlopsReport":
        if self.total != sum(self.components.values()):
            raise ValueError("total must equal the sum of components")
        if self.constant_overhead != self.total - self.dominant_term:
            raise ValueError("constant_overhead must equal total - dominant_term")
        return self


def cell_config(base: ModelConfig, s: int, l: int) -> ModelConfig:
    """``base`` resized to total history length ``s`` (split evenly over blocks) and ``l`` layers."""
    if s < base.num_blocks or s % base.num_blocks:
        raise ConfigurationError(f"sequence length {s} is not divisible into {base.num_blocks} equal blocks")
    return base.variant(budget=s // base.num_blocks, layers_per_block=l)


def kappa(config: ModelConfig) -> int:
    """FLOPs per token per layer of the linear parts: ``2 * (4 d^2 + 2 f d^2)``."""
    d = config.d_model
    return 2 * (4 * d * d + 2 * config.ffn_multiplier * d * d)


def _layer_flops(rows: int, d: int, ffn_multiplier: int) -> dict[str, int]:
    return {
        "projections": 8 * rows * d * d,
        "attention_scores": 2 * rows * rows * d,
        "attention_values": 2 * rows * rows * d,
        "ffn": 4 * ffn_multiplier * rows * d * d,
    }


def count_flops(config: ModelConfig) -> FlopsReport:
    """Exact static count; each block sees ``n_k`` history rows plus one candidate row."""
    d, f = config.d_model, config.ffn_multiplier
    components = dict.fromkeys(COMPONENTS, 0)
    per_layer = _layer_flops(config.budget + 1, d, f)
    for name, value in per_layer.items():
        components[name] = value * config.num_blocks * config.layers_per_block
    if config.use_bgf:
        components["fusion"] = sum(_layer_flops(config.num_blocks, d, f).values())
        components["gate"] = 4 * config.fused_width * config.gate_width
    components["head"] = 2 * config.fused_width

    total = sum(components.values())
    k = kappa(config)
    dominant = k * config.total_budget * config.layers_per_block
    history_scores = 2 * config.budget * config.budget * d * config.num_blocks * config.layers_per_block
    return FlopsReport(
        components=components,
        total=total,
        history_attention_scores=history_scores,
        kappa=k,
        sequence_length=config.total_budget,
        layers=config.layers_per_block,
        dominant_term=dominant,
        constant_overhead=total - dominant,
    )


def measure_flops(config: ModelConfig, params: Parameters | None = None, seed: int = 0) -> dict[str, int]:
    """Runtime matmul FLOPs of a live single-candidate forward, per component."""
    params = params if params is not None else Parameters.initialize(config, seed)
    user = bench_user(config, seed)
    batch = batch_for_users(config, [user], [[1]], [0])
    with FlopCounter() as counter:
        forward_logits(params, config, batch)
    measured = dict.fromkeys(COMPONENTS, 0)
    measured.update(counter.by_component)
    return measured


class KappaFit(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kappa: float
    constant_overhead: float
    max_relative_residual: float


def fit_kappa(reports: Sequence[FlopsReport]) -> KappaFit:
    """Least-squares ``total ~ kappa * s * l + c`` over a set of reports."""
    if len(reports) < 2:
        raise ValueError("fitting kappa needs at least two reports")
    x = np.array([[r.sequence_length * r.layers, 1.0] for r in reports], dtype=np.float64)
    y = np.array([r.total for r in reports], dtype=np.float64)
    (k, c), *_ = np.linalg.lstsq(x, y, rcond=None)
    residual = np.abs(x @ np.array([k, c]) - y) / y
    return KappaFit(kappa=float(k), constant_overhead=float(c), max_relative_residual=float(residual.max()))


class FlopsRow(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    s: int
    l: int
    total: int
    dominant_term: int
    constant_overhead: int
    attention_scores: int


def flops_table(base: ModelConfig, cells: Sequence[tuple[int, int]]) -> list[FlopsRow]:
    """One row per ``(s, l)`` cell, ``s`` being the total history length."""
    rows = []
    for s, l in cells:
        report = count_flops(cell_config(base, s, l))
        rows.append(
            FlopsRow(
                s=s,
                l=l,
                total=report.total,
                dominant_term=report.dominant_term,
                constant_overhead=report.constant_overhead,
                attention_scores=report.components["attention_scores"],
            )
        )
    return rows

"""Adaptive transformer layers and bit-wise gating fusion.

Tensors carry a leading batch axis ``B``; attention tensors are laid out as
``(B, heads, rows, head_dim)``. Every matmul runs inside a FLOP scope so the
runtime counter can attribute work per component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from climber.errors import NumericError
from climber.numerics import (
    ACTIVATIONS,
    Tensor,
    add,
    concat,
    div,
    flop_scope,
    matmul,
    mul,
    reshape,
    rms_norm,
    sigmoid,
    slice_axis,
    softmax_rows,
    softplus,
    swap_last,
    take,
    transpose,
)

from .config import ModelConfig
from .params import Parameters, layer_prefix

SOFTPLUS_AT_ZERO = float(np.logaddexp(0.0, 0.0))


@dataclass(frozen=True)
class LayerWeights:
    w_qkv: Tensor
    w_o: Tensor
    w1: Tensor
    w2: Tensor

    @classmethod
    def from_params(cls, params: Parameters, prefix: str) -> "LayerWeights":
        return cls(
            w_qkv=params[f"{prefix}.w_qkv"],
            w_o=params[f"{prefix}.w_o"],
            w1=params[f"{prefix}.w1"],
            w2=params[f"{prefix}.w2"],
        )


def split_heads(x: Tensor, num_heads: int) -> Tensor:
    batch, rows, width = x.shape
    return transpose(reshape(x, (batch, rows, num_heads, width // num_heads)), (0, 2, 1, 3))


def merge_heads(x: Tensor) -> Tensor:
    batch, heads, rows, head_dim = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (batch, rows, heads * head_dim))


def project_qkv(x: Tensor, weights: LayerWeights, num_heads: int, component: str | None = None):
    """Pre-normalize ``x`` and return per-head ``(q, k, v)``."""
    width = x.shape[-1]
    with flop_scope(component or "projections"):
        qkv = matmul(rms_norm(x), weights.w_qkv)
    return tuple(split_heads(slice_axis(qkv, i * width, (i + 1) * width), num_heads) for i in range(3))


def attend(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    *,
    temperature: float | Tensor,
    mask: np.ndarray | None = None,
    bias: Tensor | None = None,
    component: str | None = None,
) -> Tensor:
    """``softmax((q k^T + bias) / temperature, mask) v``."""
    with flop_scope(component or "attention_scores"):
        scores = matmul(q, swap_last(k))
    if bias is not None:
        scores = add(scores, bias)
    weights = softmax_rows(scores, temperature, mask)
    with flop_scope(component or "attention_values"):
        return matmul(weights, v)


def output_and_ffn(
    x: Tensor,
    attended: Tensor,
    weights: LayerWeights,
    activation: str,
    component: str | None = None,
) -> Tensor:
    """Output projection and FFN, each wrapped in a residual; FFN input is pre-normalized."""
    with flop_scope(component or "projections"):
        x = add(x, matmul(merge_heads(attended), weights.w_o))
    with flop_scope(component or "ffn"):
        hidden = ACTIVATIONS[activation](matmul(rms_norm(x), weights.w1))
        return add(x, matmul(hidden, weights.w2))


def attention_layer(
    x: Tensor,
    weights: LayerWeights,
    *,
    num_heads: int,
    temperature: float | Tensor,
    mask: np.ndarray | None = None,
    bias: Tensor | None = None,
    activation: str = "silu",
    component: str | None = None,
) -> Tensor:
    q, k, v = project_qkv(x, weights, num_heads, component)
    attended = attend(q, k, v, temperature=temperature, mask=mask, bias=bias, component=component)
    return output_and_ffn(x, attended, weights, activation, component)


def temperature_from_theta(theta: Tensor, base: float) -> Tensor:
    """``base * softplus(theta) / softplus(0)``; exactly ``base`` at theta = 0."""
    return mul(div(softplus(theta), SOFTPLUS_AT_ZERO), base)


def layer_temperature(
    params: Parameters,
    config: ModelConfig,
    block: int,
    layer: int,
    scenarios: np.ndarray,
) -> float | Tensor:
    """Per-sample temperature of shape ``(B, 1, 1, 1)``, or the fixed base value."""
    if not config.use_adaptive_temperature:
        return config.base_temperature
    theta = take(take(params[f"block{block}.theta"], layer, axis=0), np.asarray(scenarios, dtype=np.int64))
    tau = temperature_from_theta(theta, config.base_temperature)
    return reshape(tau, (len(scenarios), 1, 1, 1))


def check_finite(x: Tensor, *, block: int | None, layer: int | None) -> None:
    if not np.all(np.isfinite(x.data)):
        where = "fusion layer" if block is None else f"block {block} layer {layer}"
        raise NumericError(f"non-finite activations in {where}", block=block, layer=layer)


def atl_forward(
    params: Parameters,
    config: ModelConfig,
    x: Tensor,
    *,
    block: int,
    layer: int,
    scenarios: np.ndarray,
    mask: np.ndarray | None,
    bias: Tensor | None = None,
) -> Tensor:
    """One adaptive transformer layer of ``block`` over ``x`` of shape ``(B, rows, d)``.

    ``mask`` is boolean ``(B, rows, rows)`` (True = attend); rows with no open
    entry get a zero attention output and keep only the residual path.
    """
    weights = LayerWeights.from_params(params, layer_prefix(block, layer))
    out = attention_layer(
        x,
        weights,
        num_heads=config.num_heads,
        temperature=layer_temperature(params, config, block, layer, scenarios),
        mask=None if mask is None else mask[:, None, :, :],
        bias=bias,
        activation=config.activation,
    )
    check_finite(out, block=block, layer=layer)
    return out


def stack_blocks(block_outputs: list[Tensor]) -> Tensor:
    """``N_b`` tensors ``(B, m, d)`` -> ``(B, m, N_b, d)``."""
    expanded = [reshape(e, e.shape[:2] + (1, e.shape[2])) for e in block_outputs]
    return concat(expanded, axis=2)


def bgf_forward(params: Parameters, config: ModelConfig, stacked: Tensor, scenarios: np.ndarray) -> Tensor:
    """Fuse ``(B, m, N_b, d)`` block outputs into ``(B, m, N_b * d)``.

    A bias-free attention layer mixes the ``N_b`` block vectors of each
    candidate (temperature depends on the scenario only); the flattened result
    ``G`` is then gated element-wise by ``sigmoid(f_gate(G))`` where ``f_gate``
    is a squeeze-and-excitation bottleneck.
    """
    batch, m, blocks, width = stacked.shape
    tokens = reshape(stacked, (batch * m, blocks, width))
    if config.use_adaptive_temperature:
        per_row = np.repeat(np.asarray(scenarios, dtype=np.int64), m)
        tau = temperature_from_theta(take(params["fusion.theta"], per_row), config.base_temperature)
        temperature: float | Tensor = reshape(tau, (batch * m, 1, 1, 1))
    else:
        temperature = config.base_temperature
    fused = attention_layer(
        tokens,
        LayerWeights.from_params(params, "fusion"),
        num_heads=config.num_heads,
        temperature=temperature,
        activation=config.activation,
        component="fusion",
    )
    check_finite(fused, block=None, layer=None)
    flat = reshape(fused, (batch, m, blocks * width))
    with flop_scope("gate"):
        squeezed = ACTIVATIONS[config.activation](add(matmul(flat, params["gate.w1"]), params["gate.b1"]))
        gate = sigmoid(add(matmul(squeezed, params["gate.w2"]), params["gate.b2"]))
    return mul(flat, gate)


def head_logits(params: Parameters, fused: Tensor) -> Tensor:
    """Scalar logit per candidate from ``(B, m, N_b * d)``."""
    batch, m, _ = fused.shape
    with flop_scope("head"):
        out = add(matmul(fused, params["head.w"]), params["head.b"])
    return reshape(out, (batch, m))

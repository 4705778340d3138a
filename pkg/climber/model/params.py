"""Named parameter tensors of the network."""

from __future__ import annotations

import hashlib
from typing import Iterator, Mapping

import numpy as np

from climber.errors import NumericError
from climber.numerics import Tensor

from .config import ModelConfig


def layer_prefix(block: int, layer: int) -> str:
    return f"block{block}.layer{layer}"


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter name and shape for ``config``, in canonical order."""
    d, f = config.d_model, config.ffn_width
    shapes: dict[str, tuple[int, ...]] = {
        "item_emb": (config.vocab_size, d),
        "action_emb": (config.num_actions, d),
        "scenario_emb": (config.num_scenarios, d),
    }

    def attention_stack(prefix: str) -> None:
        shapes[f"{prefix}.w_qkv"] = (d, 3 * d)
        shapes[f"{prefix}.w_o"] = (d, d)
        shapes[f"{prefix}.w1"] = (d, f)
        shapes[f"{prefix}.w2"] = (f, d)

    for k in range(config.num_blocks):
        for i in range(config.layers_per_block):
            attention_stack(layer_prefix(k, i))
        if config.use_relative_bias:
            shapes[f"block{k}.b_pos"] = (config.num_heads, config.position_buckets)
            shapes[f"block{k}.b_time"] = (config.num_heads, config.time_buckets)
        if config.use_adaptive_temperature:
            shapes[f"block{k}.theta"] = (config.layers_per_block, config.num_scenarios)

    if config.use_bgf:
        attention_stack("fusion")
        if config.use_adaptive_temperature:
            shapes["fusion.theta"] = (config.num_scenarios,)
        shapes["gate.w1"] = (config.fused_width, config.gate_width)
        shapes["gate.b1"] = (config.gate_width,)
        shapes["gate.w2"] = (config.gate_width, config.fused_width)
        shapes["gate.b2"] = (config.fused_width,)

    shapes["head.w"] = (config.fused_width, 1)
    shapes["head.b"] = (1,)
    return shapes


_ZERO_INIT_SUFFIXES = (".theta", "gate.b1", "gate.b2", "head.b")


def _truncated_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float) -> np.ndarray:
    values = rng.standard_normal(shape)
    outside = np.abs(values) > 2.0
    while outside.any():
        values[outside] = rng.standard_normal(int(outside.sum()))
        outside = np.abs(values) > 2.0
    return values * std


class Parameters(Mapping[str, Tensor]):
    """Ordered ``name -> Tensor`` mapping with a content digest.

    The digest is cached per version; anything that writes parameter data in
    place must call :meth:`mark_updated`.
    """

    def __init__(self, tensors: Mapping[str, Tensor]) -> None:
        self._tensors: dict[str, Tensor] = dict(tensors)
        self._version = 0
        self._digest: tuple[int, str] | None = None

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0) -> "Parameters":
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in parameter_shapes(config).items():
            if name.endswith(_ZERO_INIT_SUFFIXES):
                data = np.zeros(shape)
            else:
                data = _truncated_normal(rng, shape, config.init_std)
            tensors[name] = Tensor(data, name=name)
        return cls(tensors)

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "Parameters":
        return cls({name: Tensor(np.array(value, dtype=np.float64), name=name) for name, value in arrays.items()})

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    @property
    def version(self) -> int:
        return self._version

    def mark_updated(self) -> None:
        self._version += 1

    def digest(self) -> str:
        if self._digest is None or self._digest[0] != self._version:
            hasher = hashlib.sha256()
            for name, tensor in self._tensors.items():
                hasher.update(name.encode("utf-8"))
                hasher.update(repr(tensor.shape).encode("ascii"))
                hasher.update(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
            self._digest = (self._version, hasher.hexdigest())
        return self._digest[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self._tensors.items()}

    def copy(self) -> "Parameters":
        return Parameters.from_arrays(self.arrays())

    def requires_grad_(self, flag: bool = True) -> "Parameters":
        for tensor in self._tensors.values():
            tensor.requires_grad = flag
        return self

    def check_shapes(self, config: ModelConfig) -> None:
        expected = parameter_shapes(config)
        if list(expected) != list(self._tensors):
            missing = sorted(set(expected) - set(self._tensors))
            extra = sorted(set(self._tensors) - set(expected))
            raise ValueError(f"parameter names do not match config (missing={missing}, unexpected={extra})")
        for name, shape in expected.items():
            if self._tensors[name].shape != shape:
                raise ValueError(f"parameter {name} has shape {self._tensors[name].shape}, expected {shape}")

    def check_finite(self) -> None:
        for name, tensor in self._tensors.items():
            if not np.all(np.isfinite(tensor.data)):
                raise NumericError(f"parameter {name} contains non-finite values")

"""Adam with bias correction and global-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from climber.model import Parameters


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


@dataclass
class AdamOptimizer:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 1.0
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Parameters, grads: Mapping[str, np.ndarray]) -> float:
        """Apply one update in place; returns the pre-clipping global gradient norm."""
        norm = global_norm(grads)
        scale = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = self.clip_norm / norm
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count
        for name, tensor in params.items():
            grad = grads[name] * scale
            m = self.first_moment.get(name)
            v = self.second_moment.get(name)
            m = (1.0 - self.beta1) * grad if m is None else self.beta1 * m + (1.0 - self.beta1) * grad
            v = (1.0 - self.beta2) * grad * grad if v is None else self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.first_moment[name] = m
            self.second_moment[name] = v
            tensor.data -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
        params.mark_updated()
        return norm

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {f"m/{name}": value for name, value in self.first_moment.items()}
        arrays.update({f"v/{name}": value for name, value in self.second_moment.items()})
        return arrays

    def load_state_arrays(self, arrays: Mapping[str, np.ndarray], step_count: int) -> None:
        self.first_moment = {k[2:]: np.array(v) for k, v in arrays.items() if k.startswith("m/")}
        self.second_moment = {k[2:]: np.array(v) for k, v in arrays.items() if k.startswith("v/")}
        self.step_count = step_count

    def copy(self) -> "AdamOptimizer":
        clone = AdamOptimizer(self.lr, self.beta1, self.beta2, self.eps, self.clip_norm, self.step_count)
        clone.load_state_arrays({k: v.copy() for k, v in self.state_arrays().items()}, self.step_count)
        return clone

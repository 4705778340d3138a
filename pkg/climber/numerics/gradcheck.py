"""Central finite-difference gradient oracle."""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from climber.errors import DomainError

from .tensor import Tape, Tensor, backward


def analytic_gradients(f: Callable[[], Tensor], params: Sequence[Tensor]) -> list[np.ndarray]:
    """Run ``f`` on a fresh tape and return d f / d p for each parameter."""
    for param in params:
        param.requires_grad = True
    with Tape() as tape:
        loss = f()
    backward(tape, loss)
    return [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]


def fd_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Sequence[Tensor],
    step: float = 1e-5,
    *,
    samples_per_param: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between tape gradients and central differences.

    The error for one coordinate is
    ``|analytic - central| / max(|analytic|, |central|, 1e-8)``.
    ``samples_per_param`` limits the check to that many random coordinates per
    tensor; ``None`` checks every coordinate.
    """
    if not step > 0:
        raise DomainError(f"finite-difference step must be positive, got {step}")
    tensors = list(params.values()) if isinstance(params, Mapping) else list(params)
    analytic = analytic_gradients(f, tensors)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for param, grad in zip(tensors, analytic):
        if not (param.data.flags.writeable and param.data.flags.c_contiguous):
            param.data = np.array(param.data, dtype=np.float64)
        flat = param.data.reshape(-1)
        flat_grad = grad.reshape(-1)
        if samples_per_param is None or samples_per_param >= flat.size:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=samples_per_param, replace=False)
        for coord in coords:
            original = flat[coord]
            flat[coord] = original + step
            plus = f().item()
            flat[coord] = original - step
            minus = f().item()
            flat[coord] = original
            central = (plus - minus) / (2.0 * step)
            exact = float(flat_grad[coord])
            err = abs(exact - central) / max(abs(exact), abs(central), 1e-8)
            worst = max(worst, err)
    return worst

"""Dense float64 tensors, a define-by-run tape, and a matmul FLOP counter."""

from __future__ import annotations

import math
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from climber.errors import ContractError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

_ACTIVE_TAPE: ContextVar["Tape | None"] = ContextVar("climber_active_tape", default=None)
_ACTIVE_COUNTER: ContextVar["FlopCounter | None"] = ContextVar("climber_flop_counter", default=None)
_FLOP_SCOPE: ContextVar[str] = ContextVar("climber_flop_scope", default="other")


class Tensor:
    """Row-major float64 array with an optional gradient buffer.

    Leaves created by callers (parameters, inputs) own writable data. Tensors
    produced by forward ops are read-only; only their ``grad`` changes.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data: object, *, requires_grad: bool = False, name: str | None = None) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return np.array(self.data, copy=True)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other: object) -> "Tensor":
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other: object) -> "Tensor":
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: object) -> "Tensor":
        from . import ops

        return ops.div(self, other)

    def __matmul__(self, other: object) -> "Tensor":
        from . import ops

        return ops.matmul(self, other)


def as_tensor(value: object) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass(frozen=True)
class _Node:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """Records forward operations while active (``with Tape() as tape:``)."""

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self._tokens: list[object] = []

    def __enter__(self) -> "Tape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, inputs: tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn) -> None:
        self.nodes.append(_Node(inputs=inputs, output=output, backward=backward_fn))

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


def record_result(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    """Wrap a forward result and record it when a tape is active and any input needs gradients."""
    out = Tensor(data)
    out.data.flags.writeable = False
    if any(t.requires_grad for t in inputs):
        tape = _ACTIVE_TAPE.get()
        if tape is not None:
            out.requires_grad = True
            tape.record(inputs, out, backward_fn)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``grad`` on every tensor recorded on ``tape`` with d(loss)/d(tensor)."""
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not any(node.output is loss for node in tape.nodes):
        raise ContractError("loss was not produced by an operation recorded on this tape")

    for node in tape.nodes:
        for tensor in node.inputs:
            tensor.zero_grad()
        node.output.zero_grad()
    loss.grad = np.ones_like(loss.data)

    for node in reversed(tape.nodes):
        grads = node.backward(node.output.grad)
        for tensor, grad in zip(node.inputs, grads):
            if grad is None or not tensor.requires_grad:
                continue
            tensor.grad = tensor.grad + grad


@dataclass
class FlopCounter:
    """Counts matmul FLOPs (2 per multiply-add) per component while active."""

    by_component: dict[str, int] = field(default_factory=dict)
    _tokens: list[object] = field(default_factory=list, repr=False)

    @property
    def total(self) -> int:
        return sum(self.by_component.values())

    def add(self, component: str, flops: int) -> None:
        self.by_component[component] = self.by_component.get(component, 0) + int(flops)

    def __enter__(self) -> "FlopCounter":
        self._tokens.append(_ACTIVE_COUNTER.set(self))
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_COUNTER.reset(self._tokens.pop())


@contextmanager
def flop_scope(component: str) -> Iterator[None]:
    """Attribute matmuls executed inside the block to ``component``."""
    token = _FLOP_SCOPE.set(component)
    try:
        yield
    finally:
        _FLOP_SCOPE.reset(token)


def record_matmul_flops(batch_shape: tuple[int, ...], m: int, k: int, n: int) -> None:
    counter = _ACTIVE_COUNTER.get()
    if counter is not None:
        counter.add(_FLOP_SCOPE.get(), 2 * math.prod(batch_shape) * m * k * n)

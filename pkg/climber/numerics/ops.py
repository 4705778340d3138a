"""Differentiable operations over :class:`Tensor`.

Every op computes its forward value with numpy and, when a tape is active and
an input requires gradients, records a backward rule returning one gradient
per input (``None`` for non-differentiable inputs).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from climber.errors import DimensionError, DomainError

from .tensor import Tensor, as_tensor, record_matmul_flops, record_result


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError as exc:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from exc


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


def matmul(a: object, b: object) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    try:
        batch = tuple(np.broadcast_shapes(a.shape[:-2], b.shape[:-2]))
    except ValueError as exc:
        raise DimensionError(f"matmul: batch shapes {a.shape} and {b.shape} do not broadcast") from exc

    out = np.matmul(a.data, b.data)
    record_matmul_flops(batch, a.shape[-2], a.shape[-1], b.shape[-1])

    def _backward(grad: np.ndarray):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _sum_to_shape(grad_a, a.shape), _sum_to_shape(grad_b, b.shape)

    return record_result(out, (a, b), _backward)


def add(a: object, b: object) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def _backward(grad: np.ndarray):
        return _sum_to_shape(grad, a.shape), _sum_to_shape(grad, b.shape)

    return record_result(a.data + b.data, (a, b), _backward)


def mul(a: object, b: object) -> Tensor:
    """Elementwise product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def _backward(grad: np.ndarray):
        return _sum_to_shape(grad * b.data, a.shape), _sum_to_shape(grad * a.data, b.shape)

    return record_result(a.data * b.data, (a, b), _backward)


def div(a: object, b: object) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def _backward(grad: np.ndarray):
        return _sum_to_shape(grad / b.data, a.shape), _sum_to_shape(-grad * out / b.data, b.shape)

    return record_result(out, (a, b), _backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(x: object) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)

    def _backward(grad: np.ndarray):
        return (grad * out * (1.0 - out),)

    return record_result(out, (x,), _backward)


def silu(x: object) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)

    def _backward(grad: np.ndarray):
        return (grad * (s + x.data * s * (1.0 - s)),)

    return record_result(x.data * s, (x,), _backward)


def relu(x: object) -> Tensor:
    x = as_tensor(x)

    def _backward(grad: np.ndarray):
        return (grad * (x.data > 0),)

    return record_result(np.maximum(x.data, 0.0), (x,), _backward)


def softplus(x: object) -> Tensor:
    x = as_tensor(x)

    def _backward(grad: np.ndarray):
        return (grad * _sigmoid(x.data),)

    return record_result(np.logaddexp(0.0, x.data), (x,), _backward)


ACTIVATIONS = {"silu": silu, "relu": relu}


def rms_norm(x: object, eps: float = 1e-6) -> Tensor:
    """Scale each row (last axis) to unit root-mean-square; no learnable gain."""
    x = as_tensor(x)
    width = x.shape[-1]
    rms = np.sqrt(np.mean(x.data * x.data, axis=-1, keepdims=True) + eps)
    out = x.data / rms

    def _backward(grad: np.ndarray):
        dot = np.sum(grad * x.data, axis=-1, keepdims=True)
        return (grad / rms - x.data * dot / (width * rms**3),)

    return record_result(out, (x,), _backward)


def softmax_rows(
    z: object,
    temperature: float | Tensor = 1.0,
    mask: np.ndarray | None = None,
) -> Tensor:
    """Row softmax of ``z / temperature`` over the last axis.

    ``mask`` (broadcastable to ``z``, True = keep) zeroes excluded entries; a
    row with no kept entry becomes all zeros. ``temperature`` may be a tensor
    broadcastable to ``z`` with size-1 last axis (one value per row or per
    batch), in which case it receives a gradient.
    """
    z = as_tensor(z)
    tau_tensor = temperature if isinstance(temperature, Tensor) else None
    if tau_tensor is not None:
        if tau_tensor.ndim and tau_tensor.shape[-1] != 1:
            raise DimensionError(f"softmax temperature shape {tau_tensor.shape} must end in a size-1 axis")
        _broadcast_shape(z, tau_tensor, "softmax_rows")
        tau = tau_tensor.data
    else:
        tau = np.asarray(float(temperature))
    if not (np.all(np.isfinite(tau)) and np.all(tau > 0.0)):
        raise DomainError(f"softmax temperature must be a positive finite number, got {tau}")

    scaled = z.data / tau
    if mask is None:
        keep = None
        has_open = np.ones(scaled.shape[:-1] + (1,), dtype=bool)
        row_max = scaled.max(axis=-1, keepdims=True)
        weights = np.exp(scaled - row_max)
    else:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), scaled.shape)
        has_open = keep.any(axis=-1, keepdims=True)
        masked = np.where(keep, scaled, -np.inf)
        row_max = masked.max(axis=-1, keepdims=True)
        row_max = np.where(np.isfinite(row_max), row_max, 0.0)
        weights = np.where(keep, np.exp(masked - row_max), 0.0)
    denom = weights.sum(axis=-1, keepdims=True)
    # only rows with no kept entry are zeroed; non-finite scores stay non-finite
    out = np.divide(weights, denom, out=np.zeros_like(weights), where=has_open)

    def _backward(grad: np.ndarray):
        grad_scaled = out * (grad - np.sum(grad * out, axis=-1, keepdims=True))
        grad_z = grad_scaled / tau
        if tau_tensor is None:
            return (grad_z,)
        safe = scaled if keep is None else np.where(keep, scaled, 0.0)
        grad_tau = -grad_scaled * safe / tau
        return grad_z, _sum_to_shape(grad_tau, tau_tensor.shape)

    inputs = (z,) if tau_tensor is None else (z, tau_tensor)
    return record_result(out, inputs, _backward)


def sum_(x: object, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def _backward(grad: np.ndarray):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, x.shape).copy(),)

    return record_result(out, (x,), _backward)


def mean(x: object, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return div(sum_(x, axis=axis, keepdims=keepdims), float(count))


def reshape(x: object, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view shape {x.shape} as {tuple(shape)}") from exc

    def _backward(grad: np.ndarray):
        return (grad.reshape(x.shape),)

    return record_result(out, (x,), _backward)


def transpose(x: object, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(_normalize_axis(a, x.ndim) for a in axes)
    inverse = tuple(np.argsort(axes))

    def _backward(grad: np.ndarray):
        return (grad.transpose(inverse),)

    return record_result(x.data.transpose(axes), (x,), _backward)


def swap_last(x: object) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def concat(tensors: Sequence[object], axis: int = 0) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise DimensionError("concat requires at least one tensor")
    axis = _normalize_axis(axis, parts[0].ndim)
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        shapes = ", ".join(str(p.shape) for p in parts)
        raise DimensionError(f"concat: incompatible shapes {shapes} on axis {axis}") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def _backward(grad: np.ndarray):
        return tuple(np.split(grad, bounds, axis=axis))

    return record_result(out, parts, _backward)


def slice_axis(x: object, start: int, stop: int, axis: int = -1) -> Tensor:
    """Contiguous slice ``[start:stop]`` along ``axis``."""
    x = as_tensor(x)
    axis = _normalize_axis(axis, x.ndim)
    index = (slice(None),) * axis + (slice(start, stop),)

    def _backward(grad: np.ndarray):
        full = np.zeros_like(x.data)
        full[index] = grad
        return (full,)

    return record_result(x.data[index], (x,), _backward)


def take(x: object, indices: np.ndarray | Sequence[int] | int, axis: int = 0) -> Tensor:
    """Gather entries of ``x`` along ``axis`` (embedding lookup, bias-table lookup)."""
    x = as_tensor(x)
    axis = _normalize_axis(axis, x.ndim)
    idx = np.asarray(indices, dtype=np.int64)
    out = np.take(x.data, idx, axis=axis)

    def _backward(grad: np.ndarray):
        full = np.zeros_like(x.data)
        target = np.moveaxis(full, axis, 0)
        index_axes = list(range(axis, axis + idx.ndim))
        np.add.at(target, idx, np.moveaxis(grad, index_axes, list(range(idx.ndim))))
        return (full,)

    return record_result(out, (x,), _backward)


def bce_with_logits(logits: object, labels: np.ndarray | Sequence[float]) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 labels."""
    z = as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != z.shape:
        raise DimensionError(f"bce_with_logits: logits {z.shape} and labels {y.shape} differ")
    count = max(1, z.size)
    out = np.asarray(np.sum(np.logaddexp(0.0, z.data) - y * z.data) / count)

    def _backward(grad: np.ndarray):
        return (grad * (_sigmoid(z.data) - y) / count,)

    return record_result(out, (z,), _backward)

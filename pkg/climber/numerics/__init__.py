"""Dense tensors with reverse-mode autodiff and a finite-difference oracle."""

from .gradcheck import analytic_gradients, fd_check
from .ops import (
    ACTIVATIONS,
    add,
    bce_with_logits,
    concat,
    div,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    rms_norm,
    sigmoid,
    silu,
    slice_axis,
    softmax_rows,
    softplus,
    sum_,
    swap_last,
    take,
    transpose,
)
from .tensor import FlopCounter, Tape, Tensor, active_tape, as_tensor, backward, flop_scope

__all__ = [
    "Tensor",
    "Tape",
    "FlopCounter",
    "flop_scope",
    "active_tape",
    "as_tensor",
    "backward",
    "fd_check",
    "analytic_gradients",
    "ACTIVATIONS",
    "matmul",
    "add",
    "mul",
    "div",
    "sigmoid",
    "silu",
    "relu",
    "softplus",
    "rms_norm",
    "softmax_rows",
    "sum_",
    "mean",
    "reshape",
    "transpose",
    "swap_last",
    "concat",
    "slice_axis",
    "take",
    "bce_with_logits",
]

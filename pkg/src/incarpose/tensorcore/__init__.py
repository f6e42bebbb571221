"""Dense float64 tensors with reverse-mode autodiff, AdamW, and checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .optim import AdamW, AdamWState, adamw_step
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    conv2d_1x1,
    dropout,
    dropout_mask,
    exp,
    gelu,
    grad_enabled,
    layer_norm,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    reshape,
    slice_,
    softmax,
    sub,
    sum_,
    take,
    transpose,
)

__all__ = [
    "AdamW",
    "AdamWState",
    "Tensor",
    "adamw_step",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "conv2d_1x1",
    "dropout",
    "dropout_mask",
    "exp",
    "gelu",
    "grad_enabled",
    "layer_norm",
    "load_checkpoint",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "reshape",
    "save_checkpoint",
    "slice_",
    "softmax",
    "sub",
    "sum_",
    "take",
    "transpose",
]

"""Tensor arithmetic, reverse-mode autodiff, seeded sampling and checkpoints."""
from . import io
from .optim import AdamW
from . import gradcheck
from .rng import Rng, randn
from .tensor import (
    GradMap,
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    broadcast_to,
    check_finite,
    clip,
    concat,
    cumsum,
    div,
    exp,
    gelu,
    getitem,
    layer_norm,
    log,
    matmul,
    max_pool2d,
    maximum,
    mean,
    minimum,
    mul,
    neg,
    no_grad,
    power,
    relu,
    reshape,
    sigmoid,
    silu,
    softmax,
    sqrt,
    stack,
    sub,
    sum_axis,
    swapaxes,
    take,
    tanh,
    tracing,
    transpose,
    where,
)

__all__ = [name for name in dir() if not name.startswith("_")]

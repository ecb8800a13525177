"""Minimal tensor autodiff core and neural primitives."""
from . import gradcheck, rng
from .layers import (
    EVAL,
    Dropout,
    FeedForward,
    LayerNorm,
    Linear,
    MLP,
    MultiHeadAttention,
    RunState,
    VectorAttentionBlock,
)
from .optim import adamw_step
from .params import ParameterStore, parse_checkpoint
from .tensor import (
    DTYPE,
    Tensor,
    absolute,
    add,
    concat,
    div,
    exp,
    gather,
    grad_enabled,
    layer_norm,
    matmul,
    mul,
    neg,
    no_grad,
    reduce_max,
    reduce_mean,
    reduce_min,
    reduce_sum,
    relu,
    reshape,
    softmax,
    sqrt,
    sub,
    transpose,
)

__all__ = [
    "DTYPE",
    "EVAL",
    "Dropout",
    "FeedForward",
    "LayerNorm",
    "Linear",
    "MLP",
    "MultiHeadAttention",
    "ParameterStore",
    "RunState",
    "Tensor",
    "VectorAttentionBlock",
    "absolute",
    "add",
    "adamw_step",
    "concat",
    "div",
    "exp",
    "gather",
    "grad_enabled",
    "gradcheck",
    "layer_norm",
    "matmul",
    "mul",
    "neg",
    "no_grad",
    "parse_checkpoint",
    "reduce_max",
    "reduce_mean",
    "reduce_min",
    "reduce_sum",
    "relu",
    "reshape",
    "rng",
    "softmax",
    "sqrt",
    "sub",
    "transpose",
]

"""Hand-written float64 kernels, Adam, and the finite-difference checker."""

from .adam import AdamState, adam_step
from .gradcheck import GradCheckResult, grad_check
from .kernels import (
    GruParams,
    add,
    add_scalars,
    attention_block,
    gru_sequence,
    gru_step,
    layer_norm,
    rms_norm,
    linear,
    lookup,
    multi_head_attention,
    relu,
    reshape,
    scale_scalar,
    softmax_cross_entropy,
    softmax_temp,
    take_rows,
    target_set_cross_entropy,
)
from .tape import Tape, TapeValue, backward

__all__ = [
    "AdamState",
    "adam_step",
    "GradCheckResult",
    "grad_check",
    "GruParams",
    "add",
    "add_scalars",
    "attention_block",
    "gru_sequence",
    "gru_step",
    "layer_norm",
    "rms_norm",
    "linear",
    "lookup",
    "multi_head_attention",
    "relu",
    "reshape",
    "scale_scalar",
    "softmax_cross_entropy",
    "softmax_temp",
    "take_rows",
    "target_set_cross_entropy",
    "Tape",
    "TapeValue",
    "backward",
]

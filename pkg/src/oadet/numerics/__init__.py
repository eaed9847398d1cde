"""Float64 substrate: layers, GRU kernels, gradient tape, Adam."""

from . import tape
from .adam import AdamState, adam_update
from .kernels import BACKEND
from .layers import (
    GruCellParams,
    LinearParams,
    ShapeError,
    copy_params,
    gru_roll,
    gru_step,
    linear,
    named_arrays,
    relu,
    sigmoid,
    softmax,
)
from .tape import Tape, Var

__all__ = [
    "AdamState",
    "BACKEND",
    "GruCellParams",
    "LinearParams",
    "ShapeError",
    "Tape",
    "Var",
    "adam_update",
    "copy_params",
    "gru_roll",
    "gru_step",
    "linear",
    "named_arrays",
    "relu",
    "sigmoid",
    "softmax",
    "tape",
]

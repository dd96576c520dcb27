"""Minimal reverse-mode differentiation on numpy arrays."""

from . import ops
from .gradcheck import check_gradients, numeric_grad, relative_error
from .optim import Adam, AdamState, adam_step
from .tape import Tape, Tensor, active_tape, as_tensor

__all__ = [
    "Adam",
    "AdamState",
    "Tape",
    "Tensor",
    "active_tape",
    "adam_step",
    "as_tensor",
    "check_gradients",
    "numeric_grad",
    "ops",
    "relative_error",
]

"""Reverse-mode automatic differentiation over numpy arrays."""

from .tensor import Gradients, Tape, Tensor, as_tensor, elementwise, primitive, reduce, row_norms

__all__ = [
    "Gradients",
    "Tape",
    "Tensor",
    "as_tensor",
    "elementwise",
    "primitive",
    "reduce",
    "row_norms",
]

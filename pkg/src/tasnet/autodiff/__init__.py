"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from .gradcheck import gradient_budget_ratio, gradient_check, gradient_errors
from .lstm import LstmCellParams, lstm_cell, lstm_layer
from .ops import (
    add,
    add_rowvec,
    add_scalar,
    concat,
    div,
    elementwise,
    flip,
    layer_norm,
    matmul,
    mean_all,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_,
    softmax,
    stack,
    sub,
    sum_all,
    take,
    tanh,
    transpose,
)
from .tape import Gradients, Node, NonFiniteError, Record, ShapeError, Tape

__all__ = [
    "Gradients", "LstmCellParams", "Node", "NonFiniteError", "Record", "ShapeError", "Tape",
    "add", "add_rowvec", "add_scalar", "concat", "div", "elementwise", "flip",
    "gradient_budget_ratio", "gradient_check", "gradient_errors", "layer_norm", "lstm_cell", "lstm_layer",
    "matmul", "mean_all", "mul", "relu", "reshape", "scale", "sigmoid", "slice_",
    "softmax", "stack", "sub", "sum_all", "take", "tanh", "transpose",
]

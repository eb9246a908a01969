"""Minimal float64 tensor engine with reverse-mode autodiff."""
from . import ops
from .check import gradcheck, numeric_grad, rel_error
from .optim import Adam, fan_in_uniform
from .ops import (bilinear_matrix, bilinear_sample, concat, conv2d, identity_grid, leaky_relu, pad_edge,
                  linear, matmul, resample, reshape, sigmoid, softmax, softplus, tanh, transpose)
from .tensor import GradTape, Tensor, as_tensor, backward, current_tape

__all__ = [
    "Adam", "GradTape", "Tensor", "as_tensor", "backward", "bilinear_matrix", "bilinear_sample",
    "concat", "conv2d", "current_tape", "fan_in_uniform", "gradcheck", "identity_grid",
    "leaky_relu", "linear", "matmul", "numeric_grad", "ops", "pad_edge", "rel_error", "resample", "reshape",
    "sigmoid", "softmax", "softplus", "tanh", "transpose",
]

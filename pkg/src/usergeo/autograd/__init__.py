"""Minimal reverse-mode autodiff over dense float64 arrays."""

from .checkpoint import load_parameters, load_parameters_csv, save_parameters, save_parameters_csv
from .gradcheck import GradCheckReport, grad_check
from .optim import Adam
from .tensor import (
    NonFiniteError,
    Parameter,
    Tensor,
    add,
    concat,
    cross_entropy,
    log,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    scale,
    softmax,
    spmm,
    sum_,
    take_rows,
    transpose,
    weighted_row_sum,
)

__all__ = [
    "Adam", "GradCheckReport", "NonFiniteError", "Parameter", "Tensor", "add", "concat",
    "cross_entropy", "grad_check", "load_parameters", "load_parameters_csv", "log", "matmul",
    "mean", "mul", "neg", "relu", "reshape", "save_parameters", "save_parameters_csv", "scale",
    "softmax", "spmm", "sum_", "take_rows", "transpose", "weighted_row_sum",
]

"""Dense float64 tensors with reverse-mode automatic differentiation."""

from .tensor import (
    Tensor,
    add,
    concat,
    conv2d,
    downsample_nearest,
    embedding_lookup,
    gelu,
    log_clamped,
    matmul,
    mean,
    mul,
    nearest_resize,
    one_hot,
    power,
    relu,
    reshape,
    sigmoid,
    slice_lastdim,
    softmax_lastdim,
    take_rows,
    tanh,
    tensor_sum,
    transpose,
    upsample_nearest,
)
from .gradcheck import grad_check
from .tensor_io import load_tensor, save_tensor

__all__ = [
    "Tensor",
    "add",
    "concat",
    "conv2d",
    "downsample_nearest",
    "embedding_lookup",
    "gelu",
    "grad_check",
    "load_tensor",
    "log_clamped",
    "matmul",
    "mean",
    "mul",
    "nearest_resize",
    "one_hot",
    "power",
    "relu",
    "reshape",
    "save_tensor",
    "sigmoid",
    "slice_lastdim",
    "softmax_lastdim",
    "take_rows",
    "tanh",
    "tensor_sum",
    "transpose",
    "upsample_nearest",
]

from .backend import backend_name
from .ops import (
    AdamState,
    ConvLayer,
    adam_step,
    add,
    conv2d_backward,
    conv2d_forward,
    count_parameters,
    gaussian_blur_3x3,
    gaussian_kernel_3x3,
    l1_loss,
    l1_loss_grad,
    relu,
    relu_backward,
)

__all__ = [
    "AdamState",
    "ConvLayer",
    "adam_step",
    "add",
    "backend_name",
    "conv2d_backward",
    "conv2d_forward",
    "count_parameters",
    "gaussian_blur_3x3",
    "gaussian_kernel_3x3",
    "l1_loss",
    "l1_loss_grad",
    "relu",
    "relu_backward",
]

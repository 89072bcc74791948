"""Minimal numpy neural-network substrate.

Dense tensors, 3D convolution / transposed convolution, batch normalization,
SELU, fully connected layers, MSE, Adam, cosine-annealing schedule, gradient
clipping, and early stopping. Every backward pass is checked against central
finite differences in the test suite.
"""
from .layers import (
    SELU_ALPHA,
    SELU_LAMBDA,
    BatchNorm3d,
    Conv3d,
    Flatten,
    Linear,
    Param,
    Reshape,
    SELU,
    Sequential,
    Tanh,
    TConv3d,
    batchnorm_forward,
    conv3d_backward,
    conv3d_forward,
    fc_backward,
    fc_forward,
    selu,
    selu_backward,
    tconv3d_backward,
    tconv3d_forward,
)
from .optim import Adam, OptimConfig, clip_gradients, cosine_lr, early_stop, mse, mse_grad
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "BatchNorm3d",
    "Conv3d",
    "Flatten",
    "Linear",
    "OptimConfig",
    "Param",
    "Reshape",
    "SELU",
    "SELU_ALPHA",
    "SELU_LAMBDA",
    "Sequential",
    "Tanh",
    "TConv3d",
    "batchnorm_forward",
    "clip_gradients",
    "conv3d_backward",
    "conv3d_forward",
    "cosine_lr",
    "early_stop",
    "fc_backward",
    "fc_forward",
    "load_checkpoint",
    "mse",
    "mse_grad",
    "save_checkpoint",
    "selu",
    "selu_backward",
    "tconv3d_backward",
    "tconv3d_forward",
]

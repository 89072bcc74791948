"""Layers and their gradients, numpy only.

Convolutions are cross-correlations (no kernel flip). Conv weights have shape
(out_ch, in_ch, k, k, k); transposed-conv weights (in_ch, out_ch, k, k, k).
All convolution paths reduce to three primitives: an im2col matmul forward,
a cols-against-grad matmul for weight gradients, and a per-kernel-offset
scatter for input gradients; transposed convolution reuses the same three
with roles exchanged, which keeps the adjoint identity exact.
"""
from __future__ import annotations

import numpy as np

from ..errors import BatchTooSmall, ShapeMismatch

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


class Param:
    """A trainable array with its gradient accumulator."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, data: np.ndarray, name: str = ""):
        self.name = name
        self.data = data
        self.grad = np.zeros_like(data)

    def zero_grad(self):
        self.grad[...] = 0.0


def _conv_out(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _pad3(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))


def _im2col(xp: np.ndarray, k: int, stride: int, out_sp) -> np.ndarray:
    """(N, C*k^3, L) patch matrix for a padded input (N, C, Dp, Hp, Wp)."""
    n, c = xp.shape[:2]
    do, ho, wo = out_sp
    s0, s1, s2, s3, s4 = xp.strides
    shape = (n, c, k, k, k, do, ho, wo)
    strides = (s0, s1, s2, s3, s4, s2 * stride, s3 * stride, s4 * stride)
    view = np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides)
    return view.reshape(n, c * k**3, do * ho * wo)


def _check_5d(x, what):
    if x.ndim != 5:
        raise ShapeMismatch(f"{what} must be 5D (N, C, D, H, W), got shape {x.shape}")


def conv3d_forward(x, w, b=None, stride: int = 1, pad: int = 0) -> np.ndarray:
    _check_5d(x, "conv input")
    n, c, di, hi, wi = x.shape
    o, cw, k = w.shape[0], w.shape[1], w.shape[2]
    if cw != c:
        raise ShapeMismatch(f"weight expects {cw} input channels, input has {c}")
    out_sp = (_conv_out(di, k, stride, pad), _conv_out(hi, k, stride, pad), _conv_out(wi, k, stride, pad))
    if min(out_sp) < 1:
        raise ShapeMismatch(f"conv output dims {out_sp} not positive")
    cols = _im2col(_pad3(x, pad), k, stride, out_sp)
    y = np.matmul(w.reshape(o, -1), cols)
    if b is not None:
        y += b[:, None]
    return y.reshape(n, o, *out_sp)


def _conv_weight_grad(x, grad, k: int, stride: int, pad: int) -> np.ndarray:
    """dL/dw as an (O, C*k^3) matrix given input x and output gradient."""
    out_sp = grad.shape[2:]
    cols = _im2col(_pad3(x, pad), k, stride, out_sp)
    n, o = grad.shape[:2]
    g = grad.reshape(n, o, -1)
    return np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)


def _col2im_accumulate(buf: np.ndarray, contribs: np.ndarray, k: int, stride: int) -> None:
    """Fold per-offset contributions (N, C, k, k, k, Do, Ho, Wo) into buf.

    Offsets are grouped by their residue modulo the stride so each sub-lattice
    of buf is written in one pass; within a phase the shifted contributions
    accumulate into a small contiguous scratch block first.
    """
    n, c = buf.shape[:2]
    do, ho, wo = contribs.shape[5:]
    for pd in range(min(stride, k)):
        nd = -(-(k - pd) // stride)
        for ph in range(min(stride, k)):
            nh = -(-(k - ph) // stride)
            for pw in range(min(stride, k)):
                nw = -(-(k - pw) // stride)
                scratch = np.zeros(
                    (n, c, do + nd - 1, ho + nh - 1, wo + nw - 1), dtype=buf.dtype
                )
                for qd in range(nd):
                    for qh in range(nh):
                        for qw in range(nw):
                            scratch[
                                :, :, qd : qd + do, qh : qh + ho, qw : qw + wo
                            ] += contribs[:, :, pd + qd * stride, ph + qh * stride, pw + qw * stride]
                buf[
                    :,
                    :,
                    pd : pd + stride * (do + nd - 1) : stride,
                    ph : ph + stride * (ho + nh - 1) : stride,
                    pw : pw + stride * (wo + nw - 1) : stride,
                ] += scratch


def _conv_input_grad(grad, w, stride: int, pad: int, in_spatial) -> np.ndarray:
    """Adjoint of conv3d_forward with respect to the input."""
    n, o = grad.shape[:2]
    c, k = w.shape[1], w.shape[2]
    di, hi, wi = in_spatial
    do, ho, wo = grad.shape[2:]
    dxp = np.zeros((n, c, di + 2 * pad, hi + 2 * pad, wi + 2 * pad), dtype=grad.dtype)
    g = grad.reshape(n, o, -1)
    wmat = w.transpose(1, 2, 3, 4, 0).reshape(c * k**3, o)  # (C*k^3, O)
    contribs = np.matmul(wmat, g).reshape(n, c, k, k, k, do, ho, wo)
    _col2im_accumulate(dxp, contribs, k, stride)
    if pad == 0:
        return dxp
    return dxp[:, :, pad : pad + di, pad : pad + hi, pad : pad + wi]


def conv3d_backward(x, w, grad, stride: int = 1, pad: int = 0):
    """Gradients (dx, dw, db) of a conv3d_forward call."""
    o, c, k = w.shape[0], w.shape[1], w.shape[2]
    dw = _conv_weight_grad(x, grad, k, stride, pad).reshape(o, c, k, k, k)
    db = grad.sum(axis=(0, 2, 3, 4))
    dx = _conv_input_grad(grad, w, stride, pad, x.shape[2:])
    return dx, dw, db


def _tconv_out(n: int, k: int, stride: int, pad: int, out_pad: int) -> int:
    return (n - 1) * stride - 2 * pad + k + out_pad


def tconv3d_forward(x, w, b=None, stride: int = 1, pad: int = 0, output_padding: int = 0) -> np.ndarray:
    _check_5d(x, "tconv input")
    n, ci, di, hi, wi = x.shape
    cw, co, k = w.shape[0], w.shape[1], w.shape[2]
    if cw != ci:
        raise ShapeMismatch(f"weight expects {cw} input channels, input has {ci}")
    if output_padding >= stride:
        raise ShapeMismatch("output_padding must be smaller than stride")
    out_sp = tuple(_tconv_out(s, k, stride, pad, output_padding) for s in (di, hi, wi))
    if min(out_sp) < 1:
        raise ShapeMismatch(f"tconv output dims {out_sp} not positive")
    # full scatter extent before cropping the padding
    full = tuple((s - 1) * stride + k for s in (di, hi, wi))
    buf = np.zeros((n, co, *full), dtype=x.dtype)
    g = x.reshape(n, ci, -1)
    wmat = w.transpose(1, 2, 3, 4, 0).reshape(co * k**3, ci)  # (Co*k^3, Ci)
    contribs = np.matmul(wmat, g).reshape(n, co, k, k, k, di, hi, wi)
    _col2im_accumulate(buf, contribs, k, stride)
    y = np.zeros((n, co, *out_sp), dtype=x.dtype)
    spans = [(pad, min(pad + out_sp[i], full[i])) for i in range(3)]
    y[
        :,
        :,
        : spans[0][1] - spans[0][0],
        : spans[1][1] - spans[1][0],
        : spans[2][1] - spans[2][0],
    ] = buf[:, :, spans[0][0] : spans[0][1], spans[1][0] : spans[1][1], spans[2][0] : spans[2][1]]
    if b is not None:
        y += b[None, :, None, None, None]
    return y


def tconv3d_backward(x, w, grad, stride: int = 1, pad: int = 0, output_padding: int = 0):
    """Gradients (dx, dw, db) of a tconv3d_forward call."""
    ci, co, k = w.shape[0], w.shape[1], w.shape[2]
    # dx is a plain convolution of the output gradient with the same weights
    dx = conv3d_forward(grad, w, None, stride=stride, pad=pad)
    dw = _conv_weight_grad(grad, x, k, stride, pad).reshape(ci, co, k, k, k)
    db = grad.sum(axis=(0, 2, 3, 4))
    return dx, dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode: str = "train",
                      eps: float = 1e-5, momentum: float = 0.1):
    """Per-channel batch normalization over (N, *, spatial).

    Returns (y, cache); in train mode updates running stats in place (torch
    convention: running variance uses the unbiased estimate).
    """
    axes = (0,) + tuple(range(2, x.ndim))
    if mode == "train":
        if x.shape[0] < 2:
            raise BatchTooSmall("batch normalization needs batch >= 2 in train mode")
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        n = x.size // x.shape[1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))
    else:
        mu = running_mean
        var = running_var
    shape = (1, -1) + (1,) * (x.ndim - 2)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu.reshape(shape)) * inv_std.reshape(shape)
    y = gamma.reshape(shape) * xhat + beta.reshape(shape)
    return y, (xhat, inv_std, gamma, axes, shape, mode)


def batchnorm_backward(grad, cache):
    xhat, inv_std, gamma, axes, shape, mode = cache
    dgamma = (grad * xhat).sum(axis=axes)
    dbeta = grad.sum(axis=axes)
    if mode != "train":
        dx = grad * (gamma * inv_std).reshape(shape)
        return dx, dgamma, dbeta
    n = grad.size // grad.shape[1]
    gg = grad * gamma.reshape(shape)
    dx = (
        gg
        - gg.mean(axis=axes).reshape(shape)
        - xhat * (gg * xhat).mean(axis=axes).reshape(shape)
    ) * inv_std.reshape(shape)
    return dx, dgamma, dbeta


def selu(x):
    return np.where(x > 0, SELU_LAMBDA * x, SELU_LAMBDA * SELU_ALPHA * (np.exp(np.minimum(x, 0.0)) - 1.0))


def selu_backward(grad, x):
    return grad * np.where(x > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def fc_forward(x, w, b):
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"fc input {x.shape} incompatible with weight {w.shape}")
    return x @ w.T + b


def fc_backward(x, w, grad):
    dw = grad.T @ x
    db = grad.sum(axis=0)
    dx = grad @ w
    return dx, dw, db


def lecun_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)


class Layer:
    def forward(self, x, train: bool = False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def params(self) -> list[Param]:
        return []


class Conv3d(Layer):
    def __init__(self, cin, cout, k, stride=1, pad=0, rng=None, dtype=np.float32, name="conv"):
        rng = rng or np.random.default_rng(0)
        self.stride, self.pad, self.k = stride, pad, k
        self.w = Param(lecun_normal(rng, (cout, cin, k, k, k), cin * k**3, dtype), f"{name}.w")
        self.b = Param(np.zeros(cout, dtype), f"{name}.b")
        self._x = None

    def forward(self, x, train=False):
        self._x = x
        return conv3d_forward(x, self.w.data, self.b.data, self.stride, self.pad)

    def backward(self, grad):
        dx, dw, db = conv3d_backward(self._x, self.w.data, grad, self.stride, self.pad)
        self.w.grad += dw
        self.b.grad += db
        return dx

    def params(self):
        return [self.w, self.b]


class TConv3d(Layer):
    def __init__(self, cin, cout, k, stride=1, pad=0, output_padding=0, rng=None,
                 dtype=np.float32, name="tconv"):
        rng = rng or np.random.default_rng(0)
        self.stride, self.pad, self.output_padding, self.k = stride, pad, output_padding, k
        self.w = Param(lecun_normal(rng, (cin, cout, k, k, k), cin * k**3, dtype), f"{name}.w")
        self.b = Param(np.zeros(cout, dtype), f"{name}.b")
        self._x = None

    def forward(self, x, train=False):
        self._x = x
        return tconv3d_forward(x, self.w.data, self.b.data, self.stride, self.pad, self.output_padding)

    def backward(self, grad):
        dx, dw, db = tconv3d_backward(self._x, self.w.data, grad, self.stride, self.pad, self.output_padding)
        self.w.grad += dw
        self.b.grad += db
        return dx

    def params(self):
        return [self.w, self.b]


class BatchNorm3d(Layer):
    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32, name="bn"):
        self.eps, self.momentum = eps, momentum
        self.gamma = Param(np.ones(channels, dtype), f"{name}.gamma")
        self.beta = Param(np.zeros(channels, dtype), f"{name}.beta")
        self.running_mean = np.zeros(channels, dtype)
        self.running_var = np.ones(channels, dtype)
        self._cache = None

    def forward(self, x, train=False):
        y, self._cache = batchnorm_forward(
            x, self.gamma.data, self.beta.data, self.running_mean, self.running_var,
            "train" if train else "eval", self.eps, self.momentum,
        )
        return y

    def backward(self, grad):
        dx, dgamma, dbeta = batchnorm_backward(grad, self._cache)
        self.gamma.grad += dgamma
        self.beta.grad += dbeta
        return dx

    def params(self):
        return [self.gamma, self.beta]

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class Linear(Layer):
    def __init__(self, nin, nout, rng=None, dtype=np.float32, name="fc"):
        rng = rng or np.random.default_rng(0)
        self.w = Param(lecun_normal(rng, (nout, nin), nin, dtype), f"{name}.w")
        self.b = Param(np.zeros(nout, dtype), f"{name}.b")
        self._x = None

    def forward(self, x, train=False):
        self._x = x
        return fc_forward(x, self.w.data, self.b.data)

    def backward(self, grad):
        dx, dw, db = fc_backward(self._x, self.w.data, grad)
        self.w.grad += dw
        self.b.grad += db
        return dx

    def params(self):
        return [self.w, self.b]


class SELU(Layer):
    def forward(self, x, train=False):
        self._x = x
        return selu(x)

    def backward(self, grad):
        return selu_backward(grad, self._x)


class Tanh(Layer):
    def forward(self, x, train=False):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad):
        return grad * (1.0 - self._y**2)


class Flatten(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Reshape(Layer):
    def __init__(self, shape):
        self.shape = shape  # per-sample shape

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], *self.shape)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

"""Forward and backward kernels for the layers of the tensor engine.

Tensors are float64 ``(N, C, H, W)`` arrays. Convolutions are evaluated one
kernel offset at a time as a batched matmul, so memory stays proportional to
the activations rather than to an im2col buffer.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import DegenerateBatch, ShapeMismatch


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def tconv_out_size(n: int, k: int, stride: int, pad: int, out_pad: int = 0) -> int:
    return (n - 1) * stride - 2 * pad + k + out_pad


def _window(a: np.ndarray, i: int, j: int, stride: int, ho: int, wo: int) -> np.ndarray:
    return a[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride]


def _offset_major(weight: np.ndarray) -> np.ndarray:
    # (a, b, k, k) -> contiguous (k, k, a, b); strided operands fall off the BLAS path
    return np.ascontiguousarray(weight.transpose(2, 3, 0, 1))


def conv2d_forward(x, weight, bias, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlation with zero padding; ``weight`` is ``(out_c, in_c, k, k)``."""
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c or k != k2:
        raise ShapeMismatch(f"conv weight {weight.shape} does not fit input {x.shape}")
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"conv output would be empty for input {x.shape}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    wk = _offset_major(weight)
    out = np.zeros((n, o, ho * wo))
    for i in range(k):
        for j in range(k):
            cols = _window(xp, i, j, stride, ho, wo).reshape(n, c, ho * wo)
            out += wk[i, j] @ cols
    if bias is not None:
        out += bias[None, :, None]
    return out.reshape(n, o, ho, wo)


def conv2d_backward(dy, x, weight, stride: int = 1, pad: int = 0, need_dx: bool = True):
    """Gradients ``(dx, dweight, dbias)`` of :func:`conv2d_forward`."""
    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    _, _, ho, wo = dy.shape
    dy_r = dy.reshape(n, o, ho * wo)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    dxp = np.zeros(xp.shape) if need_dx else None
    wt = _offset_major(weight.transpose(1, 0, 2, 3))
    dw = np.empty_like(weight)
    for i in range(k):
        for j in range(k):
            cols = _window(xp, i, j, stride, ho, wo).reshape(n, c, ho * wo)
            dw[:, :, i, j] = np.tensordot(dy_r, cols, axes=([0, 2], [0, 2]))
            if need_dx:
                win = _window(dxp, i, j, stride, ho, wo)
                win += (wt[i, j] @ dy_r).reshape(n, c, ho, wo)
    dx = dxp[:, :, pad : pad + h, pad : pad + w] if need_dx else None
    return dx, dw, dy_r.sum(axis=(0, 2))


def tconv2d_forward(x, weight, bias, stride: int = 1, pad: int = 0, out_pad: int = 0) -> np.ndarray:
    """Transposed convolution; ``weight`` is ``(in_c, out_c, k, k)``.

    This is the adjoint of :func:`conv2d_forward` with the same weight, stride
    and padding.
    """
    n, c, h, w = x.shape
    ci, o, k, k2 = weight.shape
    if ci != c or k != k2:
        raise ShapeMismatch(f"tconv weight {weight.shape} does not fit input {x.shape}")
    if out_pad < 0 or (out_pad and out_pad >= stride):
        raise ShapeMismatch(f"output padding {out_pad} must be smaller than stride {stride}")
    ho, wo = tconv_out_size(h, k, stride, pad, out_pad), tconv_out_size(w, k, stride, pad, out_pad)
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"tconv output would be empty for input {x.shape}")
    canvas = np.zeros((n, o, ho + 2 * pad, wo + 2 * pad))
    x_r = x.reshape(n, c, h * w)
    wt = _offset_major(weight.transpose(1, 0, 2, 3))
    for i in range(k):
        for j in range(k):
            win = _window(canvas, i, j, stride, h, w)
            win += (wt[i, j] @ x_r).reshape(n, o, h, w)
    out = canvas[:, :, pad : pad + ho, pad : pad + wo]
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out)


def tconv2d_backward(dy, x, weight, stride: int = 1, pad: int = 0, need_dx: bool = True):
    """Gradients ``(dx, dweight, dbias)`` of :func:`tconv2d_forward`."""
    n, c, h, w = x.shape
    _, o, k, _ = weight.shape
    _, _, ho, wo = dy.shape
    dcanvas = np.zeros((n, o, ho + 2 * pad, wo + 2 * pad))
    dcanvas[:, :, pad : pad + ho, pad : pad + wo] = dy
    x_r = x.reshape(n, c, h * w)
    dx = np.zeros((n, c, h * w)) if need_dx else None
    wk = _offset_major(weight)
    dw = np.empty_like(weight)
    for i in range(k):
        for j in range(k):
            cols = _window(dcanvas, i, j, stride, h, w).reshape(n, o, h * w)
            dw[:, :, i, j] = np.tensordot(x_r, cols, axes=([0, 2], [0, 2]))
            if need_dx:
                dx += wk[i, j] @ cols
    db = dy.sum(axis=(0, 2, 3))
    return (dx.reshape(n, c, h, w) if need_dx else None), dw, db


def leaky_relu_forward(x, slope: float = 0.2):
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(dy, x, slope: float = 0.2):
    return np.where(x > 0, dy, slope * dy)


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(dy, x):
    return np.where(x > 0, dy, 0.0)


def sigmoid_forward(x):
    return expit(x)


def sigmoid_backward(dy, y):
    return dy * y * (1.0 - y)


def batchnorm_forward(x, gamma, beta, eps: float = 1e-5, training: bool = True,
                      running_mean=None, running_var=None):
    """Per-channel normalisation. Returns ``(out, cache, batch_mean, batch_var)``.

    In inference mode the running statistics are used and the batch moments
    returned are ``None``.
    """
    n, c, h, w = x.shape
    if training:
        m = n * h * w
        if m < 2:
            raise DegenerateBatch(f"batch norm needs >= 2 values per channel, got {m}")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, inv_std, gamma, training)
    if training:
        return out, cache, mean, var
    return out, cache, None, None


def batchnorm_backward(dy, cache):
    xhat, inv_std, gamma, training = cache
    dgamma = np.sum(dy * xhat, axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    g = (gamma * inv_std)[None, :, None, None]
    if not training:
        return dy * g, dgamma, dbeta
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    dxhat_mean = dbeta[None, :, None, None] / m
    dxhat_xhat = dgamma[None, :, None, None] / m
    dx = g * (dy - dxhat_mean - xhat * dxhat_xhat)
    return dx, dgamma, dbeta

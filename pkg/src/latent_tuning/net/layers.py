"""Layer primitives with hand-written backward passes.

Tensors are batch-first, channels-first: (B, C, H, W). Convolutions use
3x3 kernels with one pixel of zero padding; stride 2 keeps the centers at
even input indices, so an N-pixel side maps to ceil(N / 2).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core import ShapeError

LEAKY_SLOPE = 0.01


def activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "softplus":
        return np.logaddexp(0.0, z)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return np.ones_like(z)
    if kind == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "softplus":
        return 0.5 * (1.0 + np.tanh(0.5 * z))  # logistic sigmoid, overflow-free
    raise ValueError(f"unknown activation {kind!r}")


def conv_output_size(n: int, stride: int) -> int:
    return -(-n // stride)


def _im2col(x, stride):
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * 9)
    return cols, Ho, Wo


def conv2d_pre(x, filters, biases, stride):
    """Pre-activation of a 3x3 convolution; returns (z, cols)."""
    if filters.shape[1:] != (x.shape[1], 3, 3):
        raise ShapeError(
            f"filters of shape {filters.shape} do not fit input with {x.shape[1]} channels"
        )
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    B = x.shape[0]
    F = filters.shape[0]
    cols, Ho, Wo = _im2col(x, stride)
    z = cols @ filters.reshape(F, -1).T + biases
    return z.reshape(B, Ho, Wo, F).transpose(0, 3, 1, 2), cols


def conv2d_forward(x, filters, biases, stride=1, activation="identity"):
    """3x3 convolution of an image stack, (C, H, W) or (B, C, H, W)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 3
    if single:
        x = x[None]
    z, _ = conv2d_pre(x, np.asarray(filters, float), np.asarray(biases, float), stride)
    out = activate(z, activation)
    return out[0] if single else out


def conv2d_backward(dz, x_shape, cols, filters, stride):
    """Gradients of a convolution given d(loss)/d(pre-activation)."""
    B, C, H, W = x_shape
    F = filters.shape[0]
    Ho, Wo = dz.shape[2], dz.shape[3]
    dz2 = dz.transpose(0, 2, 3, 1).reshape(-1, F)
    dW = (dz2.T @ cols).reshape(filters.shape)
    db = dz2.sum(axis=0)
    dcols = (dz2 @ filters.reshape(F, -1)).reshape(B, Ho, Wo, C, 3, 3)
    dxp = np.zeros((B, C, H + 2, W + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += (
                dcols[..., i, j].transpose(0, 3, 1, 2)
            )
    return dxp[:, :, 1:-1, 1:-1], dW, db


def upsample_zeros(x):
    """Zero-insertion upsampling by 2; with a stride-1 conv this is a transpose conv."""
    B, C, H, W = x.shape
    u = np.zeros((B, C, 2 * H, 2 * W))
    u[:, :, ::2, ::2] = x
    return u


def upsample_zeros_backward(du):
    return du[:, :, ::2, ::2]


def dense_pre(x, W, b):
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"dense layer expects {W.shape[0]} inputs, got {x.shape[-1]}")
    return x @ W + b


def dense_backward(dz, x, W):
    return dz @ W.T, x.T @ dz, dz.sum(axis=0)

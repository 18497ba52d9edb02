"""Numpy building blocks for the student network: strided 3x3
convolutions via im2col, leaky ReLU, and factor-2 bilinear up/downsampling
with exact adjoints for backpropagation.

Everything operates on (N, C, H, W) float64 arrays with fixed reduction
orders, so results are deterministic and gradients are exact linear-map
adjoints (up to the stated L1/LReLU subgradient conventions).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LRELU_SLOPE = 0.1


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (N*Ho*Wo, C*k*k) patch matrix."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # win: (N, C, Ho, Wo, k, k) -> (N, Ho, Wo, C, k, k)
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(n * ho * wo, c * k * k)


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d_forward(x, weight, bias, stride=1, pad=1):
    """weight: (O, C, k, k); returns (y, cols) with cols cached for backward."""
    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    ho = conv_out_size(h, k, stride, pad)
    wo = conv_out_size(w, k, stride, pad)
    cols = im2col(x, k, stride, pad)
    y = cols @ weight.reshape(o, -1).T + bias
    return y.reshape(n, ho, wo, o).transpose(0, 3, 1, 2), cols


def conv2d_backward(dy, cols, weight, x_shape, stride=1, pad=1):
    """Gradients of conv2d_forward; returns (dx, dweight, dbias)."""
    n, c, h, w = x_shape
    o, _, k, _ = weight.shape
    dyf = dy.transpose(0, 2, 3, 1).reshape(-1, o)
    dweight = (dyf.T @ cols).reshape(weight.shape)
    dbias = dyf.sum(axis=0)
    if stride == 1 and dy.shape[2:] == (h, w):
        # same-size conv: dx is a correlation of dy with the flipped,
        # channel-transposed kernel -- GEMM instead of scatter-add
        wt = np.ascontiguousarray(weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dcols_in = im2col(dy, k, 1, k - 1 - pad)
        dx = (dcols_in @ wt.reshape(c, -1).T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
        return dx, dweight, dbias
    dcols = dyf @ weight.reshape(o, -1)
    ho, wo = dy.shape[2], dy.shape[3]
    dcols = dcols.reshape(n, ho, wo, c, k, k)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad], dweight, dbias
    return dxp, dweight, dbias


def leaky_relu(x):
    return np.where(x >= 0.0, x, LRELU_SLOPE * x)


def leaky_relu_grad(x, dy):
    return np.where(x >= 0.0, dy, LRELU_SLOPE * dy)


def _up2_axis(x: np.ndarray, axis: int) -> np.ndarray:
    """Factor-2 bilinear upsample along one axis (half-pixel centers):
    out[2k] = 0.75 x[k] + 0.25 x[k-1], out[2k+1] = 0.75 x[k] + 0.25 x[k+1],
    clamped at the edges."""
    x = np.moveaxis(x, axis, -1)
    prev = np.concatenate([x[..., :1], x[..., :-1]], axis=-1)
    nxt = np.concatenate([x[..., 1:], x[..., -1:]], axis=-1)
    even = 0.75 * x + 0.25 * prev
    odd = 0.75 * x + 0.25 * nxt
    out = np.empty(x.shape[:-1] + (2 * x.shape[-1],))
    out[..., 0::2] = even
    out[..., 1::2] = odd
    return np.moveaxis(out, -1, axis)


def _up2_axis_adjoint(dy: np.ndarray, axis: int) -> np.ndarray:
    dy = np.moveaxis(dy, axis, -1)
    even = dy[..., 0::2]
    odd = dy[..., 1::2]
    dx = 0.75 * (even + odd)
    # even[k] spreads 0.25 to x[k-1] (clamped to 0), odd[k] to x[k+1]
    dx[..., 0] += 0.25 * even[..., 0]
    dx[..., :-1] += 0.25 * even[..., 1:]
    dx[..., -1] += 0.25 * odd[..., -1]
    dx[..., 1:] += 0.25 * odd[..., :-1]
    return np.moveaxis(dx, -1, axis)


def upsample2_bilinear(x: np.ndarray) -> np.ndarray:
    """(..., H, W) -> (..., 2H, 2W) bilinear upsampling."""
    return _up2_axis(_up2_axis(x, -2), -1)


def upsample2_bilinear_adjoint(dy: np.ndarray) -> np.ndarray:
    return _up2_axis_adjoint(_up2_axis_adjoint(dy, -1), -2)

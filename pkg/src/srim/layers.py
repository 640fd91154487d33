"""Neural-net primitives with explicit forward/backward passes.

All activations are channels-last ``(N, H, W, C)``; convolution weights are
``(K, K, C_in, C_out)``.  Forward functions return ``(output, cache)`` and
each ``*_backward`` consumes that cache.  Convolutions are stride-1,
zero-padded 'same', realized as one tensordot over sliding windows so the
work lands in BLAS.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .resample import resize_matrix

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def conv2d_forward(x, w, b=None):
    k = w.shape[0]
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    if x.shape[3] != w.shape[2]:
        raise ValueError(f"channel mismatch: input {x.shape[3]}, weight {w.shape[2]}")
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (N, H, W, Cin, K, K)
    y = np.tensordot(win, w.transpose(2, 0, 1, 3), axes=([3, 4, 5], [0, 1, 2]))
    if b is not None:
        y += b
    return y, (xp, w)


def conv2d_backward(dy, cache):
    xp, w = cache
    k = w.shape[0]
    win = sliding_window_view(xp, (k, k), axis=(1, 2))
    dw = np.tensordot(win, dy, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
    db = dy.sum(axis=(0, 1, 2))
    # Gradient w.r.t. input is the 'same' convolution of dy with the
    # spatially flipped, channel-transposed kernel.
    w_flip = w[::-1, ::-1].transpose(0, 1, 3, 2)
    dx, _ = conv2d_forward(dy, np.ascontiguousarray(w_flip))
    return dx, dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, *,
                      train, update_running=True):
    """Per-channel batch normalization over the (N, H, W) axes.

    In train mode the batch statistics normalize and, unless
    ``update_running`` is false, also update the running averages in place.
    Eval mode uses the running averages only.
    """
    if train:
        mu = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
        if update_running:
            running_mean += BN_MOMENTUM * (mu - running_mean)
            running_var += BN_MOMENTUM * (var - running_var)
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu) * inv_std
    y = gamma * xhat + beta
    return y, (xhat, inv_std.astype(x.dtype), gamma, train)


def batchnorm_backward(dy, cache):
    xhat, inv_std, gamma, train = cache
    dgamma = (dy * xhat).sum(axis=(0, 1, 2))
    dbeta = dy.sum(axis=(0, 1, 2))
    if not train:
        return dy * (gamma * inv_std), dgamma, dbeta
    m = dy.shape[0] * dy.shape[1] * dy.shape[2]
    dxhat = dy * gamma
    dx = (inv_std / m) * (
        m * dxhat - dxhat.sum(axis=(0, 1, 2)) - xhat * (dxhat * xhat).sum(axis=(0, 1, 2))
    )
    return dx, dgamma, dbeta


def relu_forward(x):
    y = np.maximum(x, 0)
    return y, (x > 0)


def relu_backward(dy, cache):
    return dy * cache


def sigmoid_forward(x):
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, y


def sigmoid_backward(dy, cache):
    y = cache
    return dy * y * (1.0 - y)


@lru_cache(maxsize=64)
def _upsample_matrices(h, w, factor):
    return (
        resize_matrix(h, h * factor, "bilinear"),
        resize_matrix(w, w * factor, "bilinear"),
    )


def _apply_separable(x, rows, cols):
    rows = rows.astype(x.dtype, copy=False)
    cols = cols.astype(x.dtype, copy=False)
    y = np.einsum("oh,nhwc->nowc", rows, x, optimize=True)
    return np.einsum("pw,nowc->nopc", cols, y, optimize=True)


def bilinear_upsample_forward(x, factor: int):
    """Bilinear upsample of (N, H, W, C) by an integer factor."""
    rows, cols = _upsample_matrices(x.shape[1], x.shape[2], factor)
    return _apply_separable(x, rows, cols), (rows, cols)


def bilinear_upsample_backward(dy, cache):
    rows, cols = cache
    return _apply_separable(dy, rows.T, cols.T)


def avgpool2_forward(x):
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even for 2x2 pooling, got {h}x{w}")
    y = x.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))
    return y, x.shape


def avgpool2_backward(dy, cache):
    n, h, w, c = cache
    dx = np.broadcast_to(
        dy[:, :, None, :, None, :] * np.asarray(0.25, dtype=dy.dtype),
        (n, h // 2, 2, w // 2, 2, c),
    )
    return dx.reshape(n, h, w, c)


def maxpool2_forward(x):
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even for 2x2 pooling, got {h}x{w}")
    blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    flat = blocks.reshape(n, h // 2, w // 2, c, 4)
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return y, (idx, x.shape)


def maxpool2_backward(dy, cache):
    idx, (n, h, w, c) = cache
    dflat = np.zeros((n, h // 2, w // 2, c, 4), dtype=dy.dtype)
    np.put_along_axis(dflat, idx[..., None], dy[..., None], axis=-1)
    blocks = dflat.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return blocks.reshape(n, h, w, c)

"""Separable image resampling (bicubic and bilinear).

Resizing is expressed as a pair of small dense matrices, one per axis:
``out = R @ img @ C.T`` applied channel-wise.  Output pixel ``i`` samples
the source at ``u = (i + 0.5) * in/out - 0.5`` (half-pixel centers).  When
downscaling, the kernel footprint is widened by the scale factor so the
filter also antialiases, which is what the common bicubic resizers do.
Taps falling outside the image are clamped to the border, and each row of
weights is normalized to sum to one, so constant images stay constant.

The bicubic kernel is the Catmull-Rom style cubic with a = -0.5:

    k(t) = 1.5|t|^3 - 2.5|t|^2 + 1          for |t| <= 1
    k(t) = -0.5|t|^3 + 2.5|t|^2 - 4|t| + 2  for 1 < |t| < 2

The bilinear kernel is the unit triangle ``max(0, 1 - |t|)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .image import check_u8, quantize_u8

_CUBIC_A = -0.5


def cubic_kernel(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom cubic (a = -0.5), support [-2, 2]."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    a = _CUBIC_A
    inner = (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    outer = a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, inner, np.where(t < 2.0, outer, 0.0))


def linear_kernel(t: np.ndarray) -> np.ndarray:
    """Triangle kernel, support [-1, 1]."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    return np.maximum(0.0, 1.0 - t)


_KERNELS = {"bicubic": (cubic_kernel, 2.0), "bilinear": (linear_kernel, 1.0)}


@lru_cache(maxsize=256)
def resize_matrix(in_size: int, out_size: int, kernel: str = "bicubic") -> np.ndarray:
    """(out_size, in_size) float64 row-stochastic resampling matrix.

    Rows hold the filter taps for one output position.  For out < in the
    kernel is stretched by ``in/out`` (antialiasing); for out >= in it is
    used at its native width.
    """
    if in_size < 1 or out_size < 1:
        raise ValueError(f"sizes must be >= 1, got {in_size} -> {out_size}")
    kfunc, support = _KERNELS[kernel]
    scale = in_size / out_size
    stretch = max(scale, 1.0)
    radius = support * stretch
    mat = np.zeros((out_size, in_size), dtype=np.float64)
    for i in range(out_size):
        u = (i + 0.5) * scale - 0.5
        lo = int(np.ceil(u - radius))
        hi = int(np.floor(u + radius))
        taps = np.arange(lo, hi + 1)
        weights = kfunc((u - taps) / stretch)
        clamped = np.clip(taps, 0, in_size - 1)
        for j, w in zip(clamped, weights):
            mat[i, j] += w
        mat[i] /= mat[i].sum()
    return mat


def resize_float(img: np.ndarray, out_h: int, out_w: int, kernel: str = "bicubic") -> np.ndarray:
    """Resize an (H, W) or (H, W, C) float array; no clipping or rounding."""
    arr = np.asarray(img, dtype=np.float64)
    rows = resize_matrix(arr.shape[0], out_h, kernel)
    cols = resize_matrix(arr.shape[1], out_w, kernel)
    if arr.ndim == 2:
        return rows @ arr @ cols.T
    if arr.ndim == 3:
        mid = np.tensordot(rows, arr, axes=(1, 0))          # (out_h, W, C)
        return np.tensordot(mid, cols, axes=(1, 1)).transpose(0, 2, 1)
    raise ValueError(f"expected 2-D or 3-D array, got shape {arr.shape}")


def resize01(img01: np.ndarray, out_h: int, out_w: int, kernel: str = "bicubic") -> np.ndarray:
    """Resize a [0, 1] image and clip the result back into [0, 1]."""
    return np.clip(resize_float(img01, out_h, out_w, kernel), 0.0, 1.0)


def anisotropic_resize(img_u8: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bicubic resize of a uint8 image to an arbitrary (out_h, out_w)."""
    check_u8(img_u8)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dimensions must be >= 1, got {out_h}x{out_w}")
    if (out_h, out_w) == img_u8.shape[:2]:
        return img_u8.copy()
    return quantize_u8(resize_float(img_u8.astype(np.float64), out_h, out_w, "bicubic"))


def downsample(img_u8: np.ndarray, factor: int) -> np.ndarray:
    """Bicubic downsample by an integer factor that divides both dimensions."""
    check_u8(img_u8)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    h, w = img_u8.shape[:2]
    if h % factor or w % factor:
        raise ValueError(f"dimensions {h}x{w} not divisible by factor {factor}")
    if factor == 1:
        return img_u8.copy()
    return anisotropic_resize(img_u8, h // factor, w // factor)


def bicubic_upscale(img_u8: np.ndarray, factor: int) -> np.ndarray:
    """Bicubic upscale by an integer factor (the classical baseline)."""
    check_u8(img_u8)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return img_u8.copy()
    h, w = img_u8.shape[:2]
    return anisotropic_resize(img_u8, h * factor, w * factor)

"""Image containers and file I/O.

Images travel through the package in two forms: ``uint8`` arrays of shape
(H, W, 3) with values in [0, 255] at the file boundary, and ``float``
arrays in [0, 1] everywhere else.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageFormatError(ValueError):
    """File exists but is not a decodable RGB/grayscale PNG or JPEG."""


def load_image(path) -> np.ndarray:
    """Load a PNG/JPEG as an (H, W, 3) uint8 RGB array.

    Grayscale inputs are replicated to three channels.  A missing or
    unreadable file raises ``OSError``; an undecodable or truncated file
    raises ``ImageFormatError``.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: not a decodable image ({exc})") from exc
    except OSError as exc:
        # PIL reports truncated/corrupt payloads as OSError after identify.
        raise ImageFormatError(f"{path}: corrupt or truncated image ({exc})") from exc
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageFormatError(f"{path}: expected 3 channels, got shape {arr.shape}")
    return arr


def save_image(path, img_u8: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as a lossless PNG."""
    arr = np.asarray(img_u8)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) uint8 array, got {arr.dtype} {arr.shape}")
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def check_u8(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) uint8 image, got {arr.dtype} {arr.shape}")
    return arr


def to_float01(img_u8: np.ndarray, dtype=np.float64) -> np.ndarray:
    """uint8 [0, 255] -> float [0, 1]."""
    return check_u8(img_u8).astype(dtype) / 255.0


def to_u8(img01: np.ndarray) -> np.ndarray:
    """float [0, 1] -> uint8, rounding half-up after scaling by 255."""
    arr = np.asarray(img01, dtype=np.float64) * 255.0
    return quantize_u8(arr)


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Clamp float intensities to [0, 255] and round half-up to uint8."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(
        np.uint8
    )


def hstack_grid(images: list[np.ndarray]) -> np.ndarray:
    """Concatenate same-height uint8 images into one horizontal strip."""
    if not images:
        raise ValueError("no images to tile")
    heights = {im.shape[0] for im in images}
    if len(heights) != 1:
        raise ValueError(f"images differ in height: {sorted(heights)}")
    return np.concatenate([check_u8(im) for im in images], axis=1)

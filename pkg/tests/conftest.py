"""Shared fixtures and synthetic-image helpers."""

import numpy as np
import pytest
from PIL import Image

from srim import resample
from srim.dataset import PairedDataset
from srim.generator import GeneratorConfig, SubNetworkConfig


def make_rgb(h, w, seed=0):
    """Random uint8 RGB image."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def formula_img01(h, w):
    """Deterministic [0, 1] image from an arithmetic pattern (no RNG)."""
    i, j, c = np.mgrid[0:h, 0:w, 0:3]
    return ((i * 31 + j * 17 + c * 7) % 64) / 63.0


def toy_images(n=20, size=32, seed=42):
    """Piecewise-constant shapes with fine 2px details.

    Sharp structure that factor-4 downsampling destroys, so the bicubic
    baseline is beatable by a model that learns the training images.
    """
    rng = np.random.default_rng(seed)
    imgs = []
    for _ in range(n):
        img = np.full((size, size, 3), rng.integers(30, 225, 3), dtype=float)
        yy, xx = np.mgrid[0:size, 0:size]
        for _ in range(int(rng.integers(3, 6))):
            kind = rng.integers(0, 2)
            color = rng.integers(0, 255, 3)
            if kind == 0:
                y0, x0 = rng.integers(0, size - 6, 2)
                hh, ww = rng.integers(4, size // 2, 2)
                img[y0:y0 + hh, x0:x0 + ww] = color
            else:
                cy, cx = rng.integers(4, size - 4, 2)
                r = rng.integers(3, 9)
                img[(yy - cy) ** 2 + (xx - cx) ** 2 < r * r] = color
        for _ in range(int(rng.integers(4, 8))):
            y0, x0 = rng.integers(0, size - 3, 2)
            img[y0:y0 + 2, x0:x0 + 2] = rng.integers(0, 255, 3)
        if rng.integers(0, 2):
            x0 = int(rng.integers(0, size - 2))
            img[:, x0:x0 + 2] = rng.integers(0, 255, 3)
        imgs.append(img.astype(np.uint8))
    return imgs


def paired_toy_set(n=20, size=32, seed=42):
    hrs = toy_images(n, size, seed)
    pairs = [(resample.downsample(hr, 4), hr) for hr in hrs]
    return PairedDataset(pairs, 4, [f"toy_{i:02d}.png" for i in range(n)])


def tiny_gen_config(conv_layers=2, hidden=4, kernel=3, noise_channels=1):
    sub = SubNetworkConfig(conv_layers=conv_layers, kernel_size=kernel,
                           hidden_channels=hidden)
    return GeneratorConfig(lower=sub, upper=sub, noise_channels=noise_channels)


def write_images(dirpath, images, prefix="img"):
    paths = []
    for i, img in enumerate(images):
        p = dirpath / f"{prefix}_{i:02d}.png"
        Image.fromarray(img, "RGB").save(p)
        paths.append(p)
    return paths


@pytest.fixture
def image_dir(tmp_path):
    """Directory of 8 random PNGs of varied sizes."""
    d = tmp_path / "images"
    d.mkdir()
    write_images(d, [make_rgb(40 + 3 * i, 36 + 5 * i, seed=i) for i in range(8)])
    return d

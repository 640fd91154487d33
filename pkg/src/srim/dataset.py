"""Paired low/high-resolution dataset construction.

Ground-truth images are anisotropically resized to a square target size,
inputs are produced by bicubic downsampling, and a seeded shuffle of the
sorted filenames yields disjoint train/test splits that do not depend on
filesystem ordering.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .image import load_image, save_image
from .resample import anisotropic_resize, downsample
from .rngtools import rng_for

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
MANIFEST_NAME = "manifest.txt"


class DataError(RuntimeError):
    """Source directory yields no usable dataset."""


@dataclass
class PairedDataset:
    """Aligned (input, target) uint8 pairs at a fixed integer scale factor."""

    pairs: list[tuple[np.ndarray, np.ndarray]]
    scale_factor: int
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.names:
            self.names = [f"{i:05d}" for i in range(len(self.pairs))]
        if len(self.names) != len(self.pairs):
            raise ValueError("names and pairs length mismatch")
        for name, (lr, hr) in zip(self.names, self.pairs):
            if (hr.shape[0], hr.shape[1]) != (
                lr.shape[0] * self.scale_factor,
                lr.shape[1] * self.scale_factor,
            ):
                raise ValueError(
                    f"{name}: target {hr.shape[:2]} is not "
                    f"{self.scale_factor}x input {lr.shape[:2]}"
                )

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.pairs[i]


def list_image_files(src_dir) -> list[str]:
    """Sorted basenames of PNG/JPEG files directly under ``src_dir``."""
    try:
        entries = sorted(os.listdir(src_dir))
    except OSError as exc:
        raise DataError(f"cannot list {src_dir}: {exc}") from exc
    return [
        name
        for name in entries
        if name.lower().endswith(IMAGE_EXTENSIONS)
        and os.path.isfile(os.path.join(src_dir, name))
    ]


def split_names(names: list[str], split_fraction: float, seed: int) -> tuple[list[str], list[str]]:
    """Deterministic disjoint train/test split of sorted names.

    The sorted list is shuffled under the seed and cut at
    ``round(n * split_fraction)``, clamped so both sides are non-empty.
    """
    if not 0.0 < split_fraction < 1.0:
        raise ValueError(f"split_fraction must be in (0, 1), got {split_fraction}")
    n = len(names)
    if n < 2:
        raise DataError(f"need at least 2 images to split, got {n}")
    order = rng_for(seed, "split").permutation(n)
    n_train = min(max(int(round(n * split_fraction)), 1), n - 1)
    shuffled = [names[i] for i in order]
    return sorted(shuffled[:n_train]), sorted(shuffled[n_train:])


def build_dataset(
    src_dir,
    target_size: int,
    scale_factor: int,
    split_fraction: float,
    seed: int,
) -> tuple[PairedDataset, PairedDataset]:
    """Build disjoint train/test paired datasets from a directory of images.

    Each ground truth is the bicubic anisotropic resize of a source image
    to ``target_size x target_size``; each input is its bicubic downsample
    by ``scale_factor``.
    """
    if target_size % scale_factor:
        raise ValueError(
            f"target_size {target_size} not divisible by scale_factor {scale_factor}"
        )
    names = list_image_files(src_dir)
    if len(names) < 2:
        raise DataError(f"no images found in {src_dir}" if not names else
                        f"need at least 2 images in {src_dir}, found {len(names)}")
    train_names, test_names = split_names(names, split_fraction, seed)

    def make(split: list[str]) -> PairedDataset:
        pairs = []
        for name in split:
            hr = anisotropic_resize(
                load_image(os.path.join(src_dir, name)), target_size, target_size
            )
            pairs.append((downsample(hr, scale_factor), hr))
        return PairedDataset(pairs, scale_factor, names=list(split))

    return make(train_names), make(test_names)


def write_cache(out_dir, train: PairedDataset, test: PairedDataset) -> str:
    """Write both splits as lossless PNGs plus a split manifest.

    Layout: ``<out>/lr/<name>.png`` and ``<out>/hr/<name>.png`` with
    matching basenames, and ``<out>/manifest.txt`` with one
    ``<basename>\\t<split>`` line per image.
    """
    lr_dir = os.path.join(out_dir, "lr")
    hr_dir = os.path.join(out_dir, "hr")
    os.makedirs(lr_dir, exist_ok=True)
    os.makedirs(hr_dir, exist_ok=True)
    lines = []
    for split_label, ds in (("train", train), ("test", test)):
        for name, (lr, hr) in zip(ds.names, ds.pairs):
            base = os.path.splitext(name)[0] + ".png"
            save_image(os.path.join(lr_dir, base), lr)
            save_image(os.path.join(hr_dir, base), hr)
            lines.append(f"{base}\t{split_label}")
    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest_path, "w") as fh:
        fh.write("\n".join(sorted(lines)) + "\n")
    return manifest_path


def read_manifest(cache_dir) -> list[tuple[str, str]]:
    path = os.path.join(cache_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise DataError(f"no manifest at {path}; run prepare-data first")
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            name, split = line.split("\t")
            entries.append((name, split))
    return entries


def load_cache(cache_dir, split: str) -> PairedDataset:
    """Load one split of a prepared cache back into memory."""
    names = [name for name, s in read_manifest(cache_dir) if s == split]
    if not names:
        raise DataError(f"manifest in {cache_dir} has no '{split}' entries")
    pairs = []
    scale = None
    for name in names:
        lr = load_image(os.path.join(cache_dir, "lr", name))
        hr = load_image(os.path.join(cache_dir, "hr", name))
        if scale is None:
            scale = hr.shape[0] // lr.shape[0]
        pairs.append((lr, hr))
    return PairedDataset(pairs, scale, names=names)

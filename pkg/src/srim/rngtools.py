"""Deterministic random-stream derivation.

Every random draw in this package comes from a generator derived from a
single root seed plus a path of labels (e.g. ``("outer", 17)``).  Streams
are independent of each other and of call order, so a training run resumed
from a checkpoint replays the exact randomness of an uninterrupted run
without serializing generator state.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"seed path labels must be non-negative, got {label}")
        return int(label)
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    raise TypeError(f"seed path label must be int or str, got {type(label)!r}")


def seed_sequence(root_seed: int, *path) -> np.random.SeedSequence:
    """SeedSequence for the stream identified by ``(root_seed, *path)``."""
    return np.random.SeedSequence(
        entropy=int(root_seed), spawn_key=tuple(_label_to_int(p) for p in path)
    )


def rng_for(root_seed: int, *path) -> np.random.Generator:
    """Generator for the stream identified by ``(root_seed, *path)``.

    The same arguments always produce a generator in the same state.
    """
    return np.random.Generator(np.random.PCG64(seed_sequence(root_seed, *path)))

"""Exact nearest-sample search in feature space.

Candidate pools carry explicit 1-based ids (candidate j of m), matching
the arg-min notation the selection step implements.  Distances are squared
Euclidean; ties resolve to the lowest id so runs are reproducible bit for
bit.  The trainer works with 0-based array positions via the
``nearest_position`` helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All squared Euclidean distances between rows of ``a`` and ``b``.

    Uses the expanded form |a|^2 - 2ab + |b|^2 with a clamp at zero, since
    cancellation can leave tiny negative values.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"need (N, D) and (M, D) matrices, got {a.shape} and {b.shape}")
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d = aa[:, None] - 2.0 * (a @ b.T) + bb[None, :]
    np.maximum(d, 0.0, out=d)
    return d


@dataclass
class CandidatePool:
    """m feature (or projected) vectors with ids 1..m."""

    vectors: np.ndarray                      # (m, D)
    ids: np.ndarray = field(default=None)    # default 1..m

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ValueError(f"pool must be a non-empty (m, D) matrix, got {self.vectors.shape}")
        if self.ids is None:
            self.ids = np.arange(1, self.vectors.shape[0] + 1)
        elif len(self.ids) != self.vectors.shape[0]:
            raise ValueError("ids length does not match pool size")

    def __len__(self) -> int:
        return self.vectors.shape[0]


def nearest_position(candidates: np.ndarray, target: np.ndarray) -> tuple[int, float]:
    """0-based row position in ``candidates`` closest to ``target``, with its
    squared distance.  Ties go to the lowest position."""
    d = pairwise_sq_dists(np.asarray(target)[None, :], candidates)[0]
    pos = int(np.argmin(d))
    return pos, float(d[pos])


def select_nearest(target, pool) -> tuple[int, float]:
    """Id (1-based, lowest wins ties) and squared distance of the pool
    candidate nearest to ``target``.  ``pool`` may be a CandidatePool or a
    raw (m, D) matrix."""
    if not isinstance(pool, CandidatePool):
        pool = CandidatePool(np.asarray(pool))
    pos, dist = nearest_position(pool.vectors, np.asarray(target, dtype=np.float64))
    return int(pool.ids[pos]), dist


def nearest_positions(candidate_sets, targets) -> tuple[np.ndarray, np.ndarray]:
    """Nearest candidate position per target.

    ``candidate_sets`` is (n, m, D) or a sequence of (m, D) matrices;
    ``targets`` is (n, D).  Returns (positions, sq_distances), both length n.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2:
        raise ValueError(f"targets must be (n, D), got {targets.shape}")
    n = targets.shape[0]
    if len(candidate_sets) != n:
        raise ValueError(f"{len(candidate_sets)} candidate sets for {n} targets")
    positions = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for i in range(n):
        positions[i], dists[i] = nearest_position(
            np.asarray(candidate_sets[i], dtype=np.float64), targets[i]
        )
    return positions, dists

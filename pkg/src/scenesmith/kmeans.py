"""Seeded k-means++ with Lloyd iterations.

Kept deliberately plain so that it is deterministic down to the bit: all
reductions are numpy pairwise sums or ``bincount`` in a fixed order, and no
BLAS matrix products are involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod

MAX_ITER = 100
TOL = 1e-6
_CHUNK = 8192


@dataclass
class ClusterSet:
    centers: np.ndarray
    seed: int
    inertia_history: list = field(default_factory=list)
    iterations: int = 0

    @property
    def k(self) -> int:
        return len(self.centers)


def assign(x: np.ndarray, centers: np.ndarray):
    """Nearest center (lowest index on ties) and squared distance per sample."""
    labels = np.empty(len(x), dtype=np.int64)
    d2 = np.empty(len(x))
    for s in range(0, len(x), _CHUNK):
        block = x[s:s + _CHUNK]
        dist = ((block[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        lab = np.argmin(dist, axis=1)
        labels[s:s + _CHUNK] = lab
        d2[s:s + _CHUNK] = dist[np.arange(len(lab)), lab]
    return labels, d2


def kmeans_pp_init(x: np.ndarray, k: int, gen: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(gen.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0:
            raise ValueError("fewer distinct samples than clusters")
        cum = np.cumsum(d2)
        idx = int(np.searchsorted(cum, gen.random() * cum[-1], side="right"))
        idx = min(idx, n - 1)
        while d2[idx] == 0:  # only reachable through rounding at the top end
            idx -= 1
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return x[chosen].copy()


def kmeans(x, k: int, seed: int, max_iter: int = MAX_ITER, tol: float = TOL) -> tuple[ClusterSet, np.ndarray]:
    """Cluster rows of ``x``. Returns the cluster set and per-sample labels.

    Empty clusters are re-seeded at the sample farthest from its center.
    Iteration stops when no center moves more than ``tol`` or after
    ``max_iter`` rounds.
    """
    x = np.asarray(x, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(np.unique(x, axis=0)) < k:
        raise ValueError(f"k={k} exceeds the number of distinct samples")
    gen = rngmod.stream(seed, "kmeans++")
    centers = kmeans_pp_init(x, k, gen)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        labels, d2 = assign(x, centers)
        history.append(float(d2.sum()))
        counts = np.bincount(labels, minlength=k)
        new = np.empty_like(centers)
        for b in range(x.shape[1]):
            new[:, b] = np.bincount(labels, weights=x[:, b], minlength=k)
        nonempty = counts > 0
        new[nonempty] /= counts[nonempty, None]
        if not nonempty.all():
            d2 = d2.copy()
            for j in np.flatnonzero(~nonempty):
                far = int(np.argmax(d2))
                new[j] = x[far]
                d2[far] = 0.0
        shift = float(np.max(np.linalg.norm(new - centers, axis=1)))
        centers = new
        if shift < tol:
            break
    labels, d2 = assign(x, centers)
    history.append(float(d2.sum()))
    return ClusterSet(centers, seed, history, it), labels

"""Greedy sequential RANSAC plane extraction with roof priors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .. import rng as rngmod
from ..geo import PointCloud

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class RansacPriors:
    max_slope_deg: float = 50.0
    min_points: int = 75
    epsilon: float = 0.35
    bitmap_epsilon: float = 0.35
    max_draws: int = 10_000
    confidence: float = 0.99


@dataclass
class PlanePrimitive:
    normal: np.ndarray      # unit, normal[2] > 0
    d: float                # n . p = d
    inliers: np.ndarray     # indices into the source cloud
    rms: float

    @property
    def slope_deg(self) -> float:
        return math.degrees(math.acos(min(1.0, float(self.normal[2]))))

    def distance(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.normal - self.d

    def z_at(self, x, y):
        n = self.normal
        return (self.d - n[0] * np.asarray(x, dtype=float) - n[1] * np.asarray(y, dtype=float)) / n[2]

    def satisfies(self, priors: RansacPriors) -> bool:
        return (len(self.inliers) >= priors.min_points and self.slope_deg < priors.max_slope_deg
                and abs(np.linalg.norm(self.normal) - 1.0) <= 1e-9 and self.normal[2] > 0)


def fit_plane(pts: np.ndarray):
    """Least-squares plane through points (SVD). Returns (unit normal with z >= 0, d, rms)."""
    c = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - c, full_matrices=False)
    n = vt[-1]
    if n[2] < 0 or (n[2] == 0 and (n[1] < 0 or (n[1] == 0 and n[0] < 0))):
        n = -n
    n = n / np.linalg.norm(n)
    d = float(n @ c)
    rms = float(np.sqrt(np.mean((pts @ n - d) ** 2)))
    return n, d, rms


class _Occupancy:
    """Horizontal occupancy grid used for the connected-inlier test."""

    def __init__(self, xy: np.ndarray, cell: float):
        self.cell = cell
        self.ij = np.floor((xy - xy.min(axis=0)) / cell).astype(np.int64)
        self.shape = tuple(self.ij.max(axis=0) + 1)

    def largest_component(self, idx: np.ndarray) -> np.ndarray:
        """Subset of point indices ``idx`` in the largest 8-connected cell cluster (by points)."""
        if idx.size == 0:
            return idx
        ij = self.ij[idx]
        lo = ij.min(axis=0)
        ij = ij - lo
        shape = tuple(ij.max(axis=0) + 1)
        occ = np.zeros(shape, dtype=bool)
        occ[ij[:, 0], ij[:, 1]] = True
        lab, nlab = ndimage.label(occ, structure=_EIGHT)
        if nlab <= 1:
            return idx
        plab = lab[ij[:, 0], ij[:, 1]]
        counts = np.bincount(plab, minlength=nlab + 1)
        counts[0] = 0
        return idx[plab == int(np.argmax(counts))]


def _cell_size(xy: np.ndarray, bitmap_epsilon: float) -> float:
    if len(xy) < 2:
        return bitmap_epsilon
    dist, _ = cKDTree(xy).query(xy, k=2)
    spacing = float(np.median(dist[:, 1]))
    return max(bitmap_epsilon, 1.05 * spacing)


def _candidate_planes(p: np.ndarray, samples: np.ndarray, cos_max: float):
    a, b, c = p[samples[:, 0]], p[samples[:, 1]], p[samples[:, 2]]
    n = np.cross(b - a, c - a)
    ln = np.linalg.norm(n, axis=1)
    ok = ln > 1e-12
    n[ok] /= ln[ok, None]
    n[n[:, 2] < 0] *= -1
    ok &= n[:, 2] > cos_max
    d = np.einsum("ij,ij->i", n, a)
    return n[ok], d[ok]


def fit_planes_ransac(cloud: PointCloud, priors: RansacPriors = RansacPriors(), seed: int = 0,
                      stream_index: int = 0, batch: int = 64) -> list[PlanePrimitive]:
    """Extract roof planes one at a time, largest connected consensus first.

    A candidate plane from three random points scores the number of its
    inliers (distance <= epsilon) lying in the largest 8-connected cluster of
    a horizontal occupancy grid whose cells are ``bitmap_epsilon`` (or the
    point spacing, if coarser). Draws per round stop adaptively at 99%
    confidence or ``max_draws``. The winner is refit by least squares, its
    inliers removed and the search repeated. Finally points that fit several
    planes go to the closest one and each plane is refit; planes left
    violating a prior are dropped.
    """
    pts = cloud.points
    n_all = len(pts)
    if n_all < priors.min_points:
        return []
    gen = rngmod.stream(seed, "ransac", stream_index)
    occ = _Occupancy(pts[:, :2], _cell_size(pts[:, :2], priors.bitmap_epsilon))
    cos_max = math.cos(math.radians(priors.max_slope_deg))
    remaining = np.arange(n_all)
    planes: list[PlanePrimitive] = []

    while len(remaining) >= priors.min_points:
        p = pts[remaining]
        m = len(remaining)
        best_score, best_n, best_d = 0, None, 0.0
        draws, needed = 0, priors.max_draws
        while draws < needed:
            nb = min(batch, needed - draws)
            samples = gen.integers(0, m, size=(nb, 3))
            draws += nb
            normals, ds = _candidate_planes(p, samples, cos_max)
            if len(normals) == 0:
                continue
            dist = np.abs(p @ normals.T - ds)
            counts = (dist <= priors.epsilon).sum(axis=0)
            for c in np.argsort(-counts, kind="stable"):
                if counts[c] < priors.min_points or counts[c] <= best_score:
                    break
                comp = occ.largest_component(remaining[dist[:, c] <= priors.epsilon])
                if len(comp) > best_score:
                    best_score, best_n, best_d = len(comp), normals[c], float(ds[c])
            if best_score >= priors.min_points:
                w = best_score / m
                needed = priors.max_draws if w >= 1 else min(
                    priors.max_draws,
                    int(math.ceil(math.log(1 - priors.confidence) / math.log(1 - w**3))))
        if best_n is None or best_score < priors.min_points:
            break
        n, d = best_n, best_d
        inl = None
        for _ in range(2):
            sel = remaining[np.abs(p @ n - d) <= priors.epsilon]
            inl = occ.largest_component(sel)
            if len(inl) < 3:
                break
            n, d, _ = fit_plane(pts[inl])
        if inl is None or len(inl) < priors.min_points or n[2] <= cos_max:
            break
        rms = float(np.sqrt(np.mean((pts[inl] @ n - d) ** 2)))
        planes.append(PlanePrimitive(n, d, np.sort(inl), rms))
        remaining = np.setdiff1d(remaining, inl, assume_unique=True)

    return _reassign(pts, planes, priors, cos_max, occ)


def _reassign(pts, planes: list[PlanePrimitive], priors: RansacPriors, cos_max: float,
              occ: _Occupancy) -> list[PlanePrimitive]:
    if len(planes) < 2:
        return planes
    # a point may only move to a plane whose footprint (grown by one cell) covers it
    reach = []
    for pl in planes:
        g = np.zeros(occ.shape, dtype=bool)
        g[occ.ij[pl.inliers, 0], occ.ij[pl.inliers, 1]] = True
        reach.append(ndimage.binary_dilation(g, structure=_EIGHT))
    members = np.concatenate([pl.inliers for pl in planes])
    owner = np.concatenate([np.full(len(pl.inliers), k) for k, pl in enumerate(planes)])
    dist = np.abs(np.stack([pl.distance(pts[members]) for pl in planes], axis=1))
    near = dist.argmin(axis=1)
    ij = occ.ij[members]
    covered = np.stack(reach)[near, ij[:, 0], ij[:, 1]]
    switch = (near != owner) & (dist[np.arange(len(members)), near] <= priors.epsilon) & covered
    owner = np.where(switch, near, owner)
    out = []
    for k in range(len(planes)):
        inl = np.sort(members[owner == k])
        if len(inl) < max(3, priors.min_points):
            continue
        n, d, rms = fit_plane(pts[inl])
        if n[2] <= cos_max:
            continue
        out.append(PlanePrimitive(n, d, inl, rms))
    return out

"""Alpha-shape boundaries of planar point sets."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import Delaunay

from .polygon import signed_area


class DegenerateRegionError(ValueError):
    """Point set spans no area (fewer than 3 distinct points or all collinear)."""


def _is_collinear(p: np.ndarray) -> bool:
    c = p - p.mean(axis=0)
    sv = np.linalg.svd(c, compute_uv=False)
    return sv[-1] <= 1e-9 * max(sv[0], 1e-300)


def alpha_triangles(points2d, alpha: float):
    """Delaunay triangles with circumradius <= alpha, oriented CCW.

    Returns the unique points and the kept ``(m, 3)`` triangles indexing them.
    """
    pts = np.unique(np.asarray(points2d, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3 or _is_collinear(pts):
        raise DegenerateRegionError("points are collinear or too few")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    simp = Delaunay(pts).simplices
    a, b, c = pts[simp[:, 0]], pts[simp[:, 1]], pts[simp[:, 2]]
    ab = np.hypot(*(b - a).T)
    bc = np.hypot(*(c - b).T)
    ca = np.hypot(*(a - c).T)
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    area2 = np.abs(cross)
    with np.errstate(divide="ignore", invalid="ignore"):
        radius = np.where(area2 > 0, ab * bc * ca / (2.0 * area2), np.inf)
    keep = (radius <= alpha) & (area2 > 0)
    tris = simp[keep].copy()
    flip = cross[keep] < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return pts, tris


def _boundary_loops(pts: np.ndarray, tris: np.ndarray) -> list[list[int]]:
    directed = set()
    for t in tris:
        for k in range(3):
            directed.add((int(t[k]), int(t[(k + 1) % 3])))
    boundary = sorted(e for e in directed if (e[1], e[0]) not in directed)
    out_edges: dict[int, list[int]] = {}
    for u, v in boundary:
        out_edges.setdefault(u, []).append(v)
    used = set()
    loops = []
    for start in boundary:
        if start in used:
            continue
        loop = [start[0]]
        used.add(start)
        prev, cur = start
        while cur != start[0]:
            loop.append(cur)
            cands = [w for w in out_edges.get(cur, []) if (cur, w) not in used]
            if not cands:
                break
            if len(cands) > 1:
                # pinch vertex: take the first edge clockwise from the way we came in
                back = math.atan2(pts[prev, 1] - pts[cur, 1], pts[prev, 0] - pts[cur, 0])

                def cw(w):
                    ang = math.atan2(pts[w, 1] - pts[cur, 1], pts[w, 0] - pts[cur, 0])
                    d = (back - ang) % (2.0 * math.pi)
                    return d if d > 0 else 2.0 * math.pi
                cands.sort(key=lambda w: (cw(w), w))
            nxt = cands[0]
            used.add((cur, nxt))
            prev, cur = cur, nxt
        loops.append(loop)
    return loops


def alpha_boundary(points2d, alpha: float) -> list[np.ndarray]:
    """Outer boundary loops of the alpha shape, counter-clockwise, largest first.

    Triangles of the Delaunay triangulation with circumradius <= ``alpha``
    are kept; edges with exactly one kept triangle are chained into loops.
    Hole loops (clockwise) are dropped since regions carry no holes.
    ``alpha = inf`` gives the convex hull.
    """
    pts, tris = alpha_triangles(points2d, alpha)
    if len(tris) == 0:
        return []
    loops = []
    for loop in _boundary_loops(pts, tris):
        poly = pts[loop]
        area = signed_area(poly)
        if len(loop) >= 3 and area > 0:
            loops.append((area, poly))
    loops.sort(key=lambda t: -t[0])
    return [p for _, p in loops]

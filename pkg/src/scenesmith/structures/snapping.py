"""Boundary regularization: snap polygon edges to the dominant axes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .polygon import is_simple, orient_ccw, remove_degenerate_vertices, signed_area


@dataclass
class _Line:
    point: np.ndarray     # a point on the line
    angle: float          # direction of travel, radians
    length: float
    edges: list           # original edge indices
    snapped: bool

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])


def _wrap_pi(a: float) -> float:
    """Wrap an undirected-line angle difference into [-pi/2, pi/2)."""
    return (a + math.pi / 2) % math.pi - math.pi / 2


def _snap_angle(angle: float, theta0: float, tol: float):
    best = None
    for k in range(4):
        target = theta0 + k * math.pi / 4
        diff = _wrap_pi(target - angle)
        if abs(diff) <= tol and (best is None or abs(diff) < abs(best)):
            best = diff
    return None if best is None else angle + best


def _build_lines(p: np.ndarray, theta0: float, tol: float, merge_tol: float, frozen: np.ndarray) -> list[_Line]:
    n = len(p)
    lines = []
    for i in range(n):
        a, b = p[i], p[(i + 1) % n]
        d = b - a
        ang = math.atan2(d[1], d[0])
        length = float(np.hypot(d[0], d[1]))
        snapped = None if frozen[i] else _snap_angle(ang, theta0, tol)
        if snapped is None:
            lines.append(_Line(a.copy(), ang, length, [i], False))
        else:
            lines.append(_Line(0.5 * (a + b), snapped, length, [i], True))

    # merge consecutive (near-)collinear lines, cyclically, never below 3 lines
    changed = True
    while changed and len(lines) > 3:
        changed = False
        for k in range(len(lines)):
            u, v = lines[k], lines[(k + 1) % len(lines)]
            if any(frozen[e] for e in u.edges + v.edges):
                continue
            if abs(_wrap_pi(u.angle - v.angle)) > merge_tol:
                continue
            w = u.length + v.length
            if u.snapped and v.snapped and abs(_wrap_pi(u.angle - v.angle)) < 1e-12:
                ang = u.angle
            else:
                ang = u.angle + v.length / w * _wrap_pi(v.angle - u.angle)
            if u.snapped or v.snapped:
                resnap = _snap_angle(ang, theta0, tol)
                ang = ang if resnap is None else resnap
            mid_u = u.point + (0.0 if u.snapped else 0.5 * u.length) * u.direction
            mid_v = v.point + (0.0 if v.snapped else 0.5 * v.length) * v.direction
            merged = _Line((u.length * mid_u + v.length * mid_v) / w, ang, w, u.edges + v.edges,
                           u.snapped or v.snapped)
            if (k + 1) % len(lines) == 0:
                lines = [merged] + lines[1:-1]
            else:
                lines[k:k + 2] = [merged]
            changed = True
            break
    return lines


def _intersect(u: _Line, v: _Line):
    du, dv = u.direction, v.direction
    den = du[0] * dv[1] - du[1] * dv[0]
    if abs(den) < math.sin(math.radians(1e-3)):
        return None
    w = v.point - u.point
    t = (w[0] * dv[1] - w[1] * dv[0]) / den
    return u.point + t * du


def _assemble(p: np.ndarray, lines: list[_Line]) -> np.ndarray:
    verts = []
    for k in range(len(lines)):
        u, v = lines[k - 1], lines[k]
        x = _intersect(u, v)
        if x is None:
            x = p[v.edges[0]]     # original vertex where v starts
        verts.append(x)
    return np.array(verts)


def snap_boundary(polygon, theta0: float, angle_tolerance: float = math.radians(15.0),
                  merge_tolerance: float = math.radians(1.0)) -> np.ndarray:
    """Snap edges to ``theta0 + k * 45 deg`` and rebuild the corners.

    Edges within ``angle_tolerance`` of a target orientation are rotated
    about their midpoints onto it; consecutive edges within
    ``merge_tolerance`` of each other are merged into one line, and new
    vertices are the intersections of consecutive lines. If the result is
    not simple, the two lines meeting at the corner that moved farthest are
    restored to their original edges and the snap is redone, until the
    polygon is simple (at worst the input comes back). Angles are radians.
    """
    p = orient_ccw(remove_degenerate_vertices(polygon))
    n = len(p)
    if n < 3:
        raise ValueError("polygon needs at least 3 vertices")
    frozen = np.zeros(n, dtype=bool)
    while True:
        lines = _build_lines(p, theta0, angle_tolerance, merge_tolerance, frozen)
        out = _assemble(p, lines)
        out = remove_degenerate_vertices(out)
        if len(out) >= 3 and is_simple(out) and signed_area(out) > 0:
            return orient_ccw(out)
        if frozen.all():
            return p
        moved = []
        for k in range(len(lines)):
            start = p[lines[k].edges[0]]
            x = _intersect(lines[k - 1], lines[k])
            moved.append(np.inf if x is None else float(np.hypot(*(x - start))))
        order = np.argsort(moved)[::-1]
        progressed = False
        for k in order:
            cand = lines[k - 1].edges + lines[k].edges
            if not frozen[cand].all():
                frozen[cand] = True
                progressed = True
                break
        if not progressed:
            frozen[:] = True

"""Planar polygon utilities: area, simplicity, splitting, simplification, ear clipping.

Polygons are ``(n, 2)`` arrays of vertices without a repeated closing vertex.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-9


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def signed_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_area(poly) -> float:
    return abs(signed_area(poly))


def orient_ccw(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    return p[::-1].copy() if signed_area(p) < 0 else p.copy()


def _scale(p: np.ndarray) -> float:
    return max(1.0, float(np.abs(p).max())) if len(p) else 1.0


def segment_intersection(p1, p2, q1, q2, eps: float = _EPS):
    """First common point of closed segments p1-p2 and q1-q2, or None.

    Touching counts. For collinear overlapping segments the overlap point
    closest to ``p1`` is returned.
    """
    p1, p2, q1, q2 = (np.asarray(a, dtype=float) for a in (p1, p2, q1, q2))
    r = p2 - p1
    s = q2 - q1
    qp = q1 - p1
    denom = _cross(r[0], r[1], s[0], s[1])
    tol = eps * max(1.0, float(np.abs(np.concatenate([p1, p2, q1, q2])).max()))
    rr = float(r @ r)
    ss = float(s @ s)
    if abs(denom) > tol * max(np.sqrt(rr), np.sqrt(ss), 1e-300):
        t = _cross(qp[0], qp[1], s[0], s[1]) / denom
        u = _cross(qp[0], qp[1], r[0], r[1]) / denom
        lim_t = tol / max(np.sqrt(rr), 1e-300)
        lim_u = tol / max(np.sqrt(ss), 1e-300)
        if -lim_t <= t <= 1 + lim_t and -lim_u <= u <= 1 + lim_u:
            return p1 + min(max(t, 0.0), 1.0) * r
        return None
    # parallel
    if abs(_cross(qp[0], qp[1], r[0], r[1])) > tol * max(np.sqrt(rr), 1.0):
        return None
    if rr == 0:
        return p1.copy() if np.allclose(p1, q1, atol=tol) or np.allclose(p1, q2, atol=tol) else None
    t0 = float(qp @ r) / rr
    t1 = float((q2 - p1) @ r) / rr
    lo, hi = min(t0, t1), max(t0, t1)
    if hi < -tol or lo > 1 + tol:
        return None
    return p1 + max(lo, 0.0) * r


def _first_crossing(p: np.ndarray):
    n = len(p)
    for i in range(n):
        a, b = p[i], p[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            x = segment_intersection(a, b, p[j], p[(j + 1) % n])
            if x is not None:
                return i, j, x
    return None


def is_simple(poly) -> bool:
    p = np.asarray(poly, dtype=float)
    if len(p) < 3:
        return False
    return _first_crossing(p) is None


def remove_degenerate_vertices(poly, eps: float = _EPS) -> np.ndarray:
    """Drop repeated vertices and vertices with no turn (collinear or 180 degree spikes)."""
    p = [np.asarray(v, dtype=float) for v in np.asarray(poly, dtype=float)]
    tol = eps * _scale(np.asarray(poly, dtype=float).reshape(-1, 2))
    changed = True
    while changed and len(p) >= 3:
        changed = False
        n = len(p)
        for i in range(n):
            prev, cur, nxt = p[i - 1], p[i], p[(i + 1) % n]
            if np.linalg.norm(cur - prev) <= tol:
                del p[i]
                changed = True
                break
            a, b = cur - prev, nxt - cur
            la, lb = np.linalg.norm(a), np.linalg.norm(b)
            if lb <= tol:
                continue
            if abs(_cross(a[0], a[1], b[0], b[1])) <= tol * max(la, lb):
                del p[i]
                changed = True
                break
    return np.array(p).reshape(-1, 2)


def split_self_intersections(poly) -> list[np.ndarray]:
    """Split a closed loop at its self-intersections into simple loops.

    Repeatedly cuts at the first crossing of two non-adjacent edges (a
    repeated vertex counts as a crossing); each cut yields two strictly
    shorter loops, so the recursion terminates.
    """
    out = []
    stack = [remove_degenerate_vertices(poly)]
    while stack:
        p = stack.pop()
        if len(p) < 3:
            continue
        hit = _first_crossing(p)
        if hit is None:
            out.append(p)
            continue
        i, j, x = hit
        n = len(p)
        a = np.vstack([x[None], p[i + 1:j + 1]])
        b = np.vstack([x[None], p[j + 1:], p[:i + 1]])
        stack.append(remove_degenerate_vertices(b))
        stack.append(remove_degenerate_vertices(a))
    return out


def clean_boundary(polygons, min_area: float = 7.0) -> list[np.ndarray]:
    """Simple, counter-clockwise loops of at least ``min_area``.

    Self-intersecting loops are split first; loops with fewer than three
    vertices or too little area (including zero-area edge chains) are
    discarded.
    """
    out = []
    for poly in polygons:
        p = np.asarray(poly, dtype=float).reshape(-1, 2)
        if len(p) < 3:
            continue
        for loop in split_self_intersections(p):
            if len(loop) >= 3 and polygon_area(loop) >= min_area and polygon_area(loop) > 0:
                out.append(orient_ccw(loop))
    return out


def _dp(points: np.ndarray, tol: float) -> list[int]:
    """Douglas-Peucker on an open chain; returns kept indices."""
    n = len(points)
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        s, e = stack.pop()
        if e <= s + 1:
            continue
        a, b = points[s], points[e]
        d = b - a
        ln = np.hypot(d[0], d[1])
        seg = points[s + 1:e] - a
        if ln == 0:
            dist = np.hypot(seg[:, 0], seg[:, 1])
        else:
            dist = np.abs(seg[:, 0] * d[1] - seg[:, 1] * d[0]) / ln
        k = int(np.argmax(dist))
        if dist[k] > tol:
            m = s + 1 + k
            keep[m] = True
            stack.append((s, m))
            stack.append((m, e))
    return list(np.flatnonzero(keep))


def simplify_polygon(poly, tol: float) -> np.ndarray:
    """Douglas-Peucker simplification of a closed loop.

    The loop is cut at vertex 0 and at the vertex farthest from it, and the
    two chains are simplified separately. Falls back to the input if the
    result would have fewer than three vertices.
    """
    p = np.asarray(poly, dtype=float)
    n = len(p)
    if n <= 3 or tol <= 0:
        return p.copy()
    far = int(np.argmax(np.hypot(*(p - p[0]).T)))
    if far == 0:
        return p.copy()
    first = _dp(p[:far + 1], tol)
    second = _dp(np.vstack([p[far:], p[:1]]), tol)
    idx = first + [far + k for k in second[1:-1]]
    out = p[idx]
    return out if len(out) >= 3 else p.copy()


def _point_in_triangle(pt, a, b, c, tol) -> bool:
    d1 = _cross(b[0] - a[0], b[1] - a[1], pt[0] - a[0], pt[1] - a[1])
    d2 = _cross(c[0] - b[0], c[1] - b[1], pt[0] - b[0], pt[1] - b[1])
    d3 = _cross(a[0] - c[0], a[1] - c[1], pt[0] - c[0], pt[1] - c[1])
    return d1 >= -tol and d2 >= -tol and d3 >= -tol


def ear_clip(poly) -> np.ndarray:
    """Triangulate a simple polygon by ear clipping.

    Returns ``(n - 2, 3)`` vertex indices, each triangle counter-clockwise.
    """
    p = np.asarray(poly, dtype=float)
    n = len(p)
    if n < 3:
        raise ValueError("need at least 3 vertices")
    idx = list(range(n)) if signed_area(p) > 0 else list(range(n))[::-1]
    tol = _EPS * _scale(p) ** 2
    tris = []
    while len(idx) > 3:
        m = len(idx)
        ear = None
        best_convex, best_cross = None, -np.inf
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = p[i0], p[i1], p[i2]
            cr = _cross(b[0] - a[0], b[1] - a[1], c[0] - a[0], c[1] - a[1])
            if cr <= tol:
                continue
            if cr > best_cross:
                best_convex, best_cross = k, cr
            blocked = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                q = p[j]
                if (np.array_equal(q, a) or np.array_equal(q, b) or np.array_equal(q, c)):
                    continue
                if _point_in_triangle(q, a, b, c, tol):
                    blocked = True
                    break
            if not blocked:
                ear = k
                break
        if ear is None:
            # numerically degenerate input: clip the most convex vertex, or any
            ear = best_convex if best_convex is not None else 0
        tris.append((idx[ear - 1], idx[ear], idx[(ear + 1) % m]))
        del idx[ear]
    tris.append((idx[0], idx[1], idx[2]))
    return np.array(tris, dtype=np.int64)

"""Bare-earth terrain (DTM) from a filtered DSM.

Each tile gets one ground elevation from an elevation histogram. Tile values
are averaged onto the corners between tiles, which are then refined
iteratively: for every tile the four leave-one-out planes through three of
its corners are checked and an outlying corner is pulled onto the plane of
the others.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from .geo import GeoTransform, LVCSOrigin, RasterGrid, uv_from_xy
from .mesh import TriangleMesh

NW, NE, SW, SE = range(4)


@dataclass(frozen=True)
class TileCell:
    ground_elev: float
    corner_elevs: tuple[float, float, float, float]   # NW, NE, SW, SE
    sample_count: int


@dataclass
class TileGrid:
    tile_size: float
    ground: np.ndarray          # (R, C) initial ground estimate per tile, NaN = empty
    sample_count: np.ndarray    # (R, C)
    dsm_max: np.ndarray         # (R, C) highest valid DSM value per tile, NaN = unknown
    corner_x: np.ndarray        # (C + 1,) LVCS x of corner columns, west to east
    corner_y: np.ndarray        # (R + 1,) LVCS y of corner rows, north to south
    estimates: Optional[np.ndarray] = None   # (R, C, 4) per-tile corner estimates
    corners: Optional[np.ndarray] = None     # (R + 1, C + 1) smoothed elevations
    floor: Optional[np.ndarray] = None       # (R, C) lower edge of the chosen ground bin, NaN = unknown

    @property
    def shape(self) -> tuple[int, int]:
        return self.ground.shape

    def cell(self, i: int, j: int) -> TileCell:
        if self.corners is not None:
            z = self.corners
            ce = (z[i, j], z[i, j + 1], z[i + 1, j], z[i + 1, j + 1])
        else:
            ce = (self.ground[i, j],) * 4
        return TileCell(float(self.ground[i, j]), tuple(float(c) for c in ce), int(self.sample_count[i, j]))

    def elevation_at(self, x, y) -> np.ndarray:
        """Elevation of the triangulated DTM surface at LVCS (x, y).

        Uses the same NW-SE split as :func:`triangulate_dtm`; points outside
        the grid are clamped to its edge.
        """
        if self.corners is None:
            raise ValueError("tile grid has not been smoothed")
        i, j, s, t = self.locate(x, y)
        z = self.corners
        znw, zne, zsw, zse = z[i, j], z[i, j + 1], z[i + 1, j], z[i + 1, j + 1]
        lower = znw + t * (zsw - znw) + s * (zse - zsw)
        upper = znw + s * (zne - znw) + t * (zse - zne)
        return np.where(t >= s, lower, upper)

    def locate(self, x, y):
        """Tile (row, col) holding each point and its (s, t) position inside it, east and south."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        cx, cy = self.corner_x, self.corner_y
        j = np.clip(np.searchsorted(cx, x, side="right") - 1, 0, len(cx) - 2)
        i = np.clip(np.searchsorted(-cy, -y, side="right") - 1, 0, len(cy) - 2)
        s = np.clip((x - cx[j]) / (cx[j + 1] - cx[j]), 0.0, 1.0)
        t = np.clip((cy[i] - y) / (cy[i] - cy[i + 1]), 0.0, 1.0)
        return i, j, s, t

    def to_json(self) -> str:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()
        return json.dumps({
            "tile_size": self.tile_size, "ground": arr(self.ground),
            "sample_count": arr(self.sample_count), "dsm_max": arr(self.dsm_max),
            "corner_x": arr(self.corner_x), "corner_y": arr(self.corner_y),
            "corners": arr(self.corners), "floor": arr(self.floor),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TileGrid":
        d = json.loads(text)

        def arr(key, dtype=float):
            v = d.get(key)
            return None if v is None else np.array(v, dtype=dtype)
        return cls(d["tile_size"], arr("ground"), arr("sample_count", np.int64), arr("dsm_max"),
                   arr("corner_x"), arr("corner_y"), None, arr("corners"), arr("floor"))


def tile_ground_elevation(elevations, bin_width: float = 1.0) -> Optional[float]:
    """Most probable ground elevation of one tile.

    Bins run upward from the lowest sample in ``bin_width`` steps. The
    result is the center of the lowest bin holding more than 1% of the
    samples, clipped to the range of the samples inside that bin. If no bin
    passes (only possible with very many bins) the fullest bin is used.
    Returns None for an empty tile.
    """
    r = _ground_bin(elevations, bin_width)
    return None if r is None else r[0]


def _ground_bin(elevations, bin_width: float):
    """``(ground, floor)``: the estimate and the lower edge of its bin."""
    e = np.asarray(elevations, dtype=float).ravel()
    e = e[np.isfinite(e)]
    if e.size == 0:
        return None
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    lo = float(e.min())
    nbins = max(1, int(math.ceil((float(e.max()) - lo) / bin_width)))
    idx = np.minimum(((e - lo) / bin_width).astype(np.int64), nbins - 1)
    counts = np.bincount(idx, minlength=nbins)
    passing = np.flatnonzero(counts > 0.01 * e.size)
    b = int(passing[0]) if passing.size else int(np.argmax(counts))
    inside = e[idx == b]
    center = lo + (b + 0.5) * bin_width
    return float(np.clip(center, inside.min(), inside.max())), float(inside.min())


def build_tile_grid(dsm: RasterGrid, origin: LVCSOrigin, tile_size: float = 32.0,
                    bin_width: float = 1.0, mask=None) -> TileGrid:
    """Tile the DSM and estimate a ground elevation per tile.

    ``mask`` (nonzero = excluded, e.g. trees and water) removes pixels from
    the histograms. Tiles with no usable pixel take the value of the nearest
    non-empty tile.
    """
    if dsm.bands != 1:
        raise ValueError("DSM must have one band")
    t = dsm.transform
    tpx = max(1, int(round(tile_size / t.pixel_size_x)))
    tpy = max(1, int(round(tile_size / t.pixel_size_y)))
    h, w = dsm.shape
    rows, cols = math.ceil(h / tpy), math.ceil(w / tpx)
    z = dsm.samples[0]
    valid = dsm.valid_mask()
    usable = valid.copy()
    if mask is not None:
        m = mask.samples[0] if isinstance(mask, RasterGrid) else np.asarray(mask)
        if m.shape != z.shape:
            raise ValueError("mask does not match DSM")
        usable &= m == 0
    ground = np.full((rows, cols), np.nan)
    floor = np.full((rows, cols), np.nan)
    count = np.zeros((rows, cols), dtype=np.int64)
    dmax = np.full((rows, cols), np.nan)
    for i in range(rows):
        for j in range(cols):
            sl = (slice(i * tpy, (i + 1) * tpy), slice(j * tpx, (j + 1) * tpx))
            vals = z[sl][usable[sl]]
            count[i, j] = vals.size
            g = _ground_bin(vals, bin_width)
            if g is not None:
                ground[i, j], floor[i, j] = g
            allv = z[sl][valid[sl]]
            if allv.size:
                dmax[i, j] = allv.max()
    if np.all(np.isnan(ground)):
        raise ValueError("no usable DSM samples in any tile")
    missing = np.isnan(ground)
    if missing.any():
        _, (ri, ci) = ndimage.distance_transform_edt(missing, return_indices=True)
        ground = ground[ri, ci]
    x0, y0 = t.corner(origin)
    cx = x0 + np.minimum(np.arange(cols + 1) * tpx, w) * t.pixel_size_x
    cy = y0 - np.minimum(np.arange(rows + 1) * tpy, h) * t.pixel_size_y
    return TileGrid(float(tile_size), ground, count, dmax, cx, cy, floor=floor)


def grid_from_ground(ground, tile_size: float = 1.0) -> TileGrid:
    """Tile grid straight from per-tile ground values (corner rows run north to south)."""
    g = np.asarray(ground, dtype=float)
    r, c = g.shape
    return TileGrid(float(tile_size), g, np.ones_like(g, dtype=np.int64), np.full_like(g, np.nan),
                    np.arange(c + 1) * tile_size, -np.arange(r + 1) * tile_size)


# --- smoothing ------------------------------------------------------------------

def _extrapolate(z1, z2, p1, p2, pb):
    return z1 + (z1 - z2) * (pb - p1) / (p1 - p2)


def _to_corner_lines(v: np.ndarray, cx: np.ndarray) -> np.ndarray:
    """Values at tile centers along the last axis -> values at the corner lines.

    Interior corners average their two tiles. Border corners are linearly
    extrapolated from the two nearest interior corners, or with only two
    tiles from the interior corner and the border tile's center; a single
    tile is copied.
    """
    c = v.shape[-1]
    z = np.empty(v.shape[:-1] + (c + 1,))
    z[..., 1:c] = 0.5 * (v[..., :-1] + v[..., 1:])
    if c == 1:
        z[..., 0] = z[..., 1] = v[..., 0]
    elif c == 2:
        xc = 0.5 * (cx[:-1] + cx[1:])
        z[..., 0] = _extrapolate(z[..., 1], v[..., 0], cx[1], xc[0], cx[0])
        z[..., 2] = _extrapolate(z[..., 1], v[..., 1], cx[1], xc[1], cx[2])
    else:
        z[..., 0] = _extrapolate(z[..., 1], z[..., 2], cx[1], cx[2], cx[0])
        z[..., c] = _extrapolate(z[..., c - 1], z[..., c - 2], cx[c - 1], cx[c - 2], cx[c])
    return z


def _consensus(ground: np.ndarray, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    """Initial corner grid from per-tile ground values.

    Interior corners are the mean of their four tiles; border corners are
    extrapolated (a plain average there would sit half a tile inward and
    bend planar ground). Done as an x pass then a y pass, so a planar
    ground is reproduced exactly.
    """
    h = _to_corner_lines(ground, cx)
    return _to_corner_lines(h.T, cy).T


def _spread(z: np.ndarray) -> np.ndarray:
    return np.stack([z[:-1, :-1], z[:-1, 1:], z[1:, :-1], z[1:, 1:]], axis=-1)


def _plane_proposals(est: np.ndarray, threshold: float):
    """Leave-one-out plane test for every tile.

    On a rectangle the plane through three corners predicts the fourth as
    (sum of its two neighbours) - (opposite corner), so all four residuals
    equal the tile's twist ``NW + SE - NE - SW``. A tile whose twist exceeds
    ``threshold`` proposes one replacement: the corner farthest from the
    mean of the other three (first in NW, NE, SW, SE order on ties) moves
    onto the plane of the others. Returns ``(rows, cols, corner, value)``.
    """
    nw, ne, sw, se = (est[..., k] for k in range(4))
    twist = nw + se - ne - sw
    pred = np.stack([ne + sw - se, nw + se - sw, nw + se - ne, ne + sw - nw], axis=-1)
    dev = np.abs(est - est.mean(axis=-1, keepdims=True))
    worst = np.argmax(dev, axis=-1)
    ii, jj = np.nonzero(np.abs(twist) > threshold)
    kk = worst[ii, jj]
    return ii, jj, kk, pred[ii, jj, kk]


_CORNER_OFFSETS = np.array([(0, 0), (0, 1), (1, 0), (1, 1)])


def smooth_corners(tiles: TileGrid, iterations: int = 10, outlier_threshold: float = 1.0) -> TileGrid:
    """Iteratively refine tile-corner elevations; tile ground values stay fixed.

    Corners start as the average of their adjacent tiles' ground values.
    Each round then runs the leave-one-out plane test on every tile against
    the previous round's corners and writes the replacements into the next
    round's grid (a corner flagged by several tiles takes the mean of their
    proposals). Corners are finally capped at the highest DSM sample of
    their adjacent tiles when that is known.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if np.all(np.isnan(tiles.ground)):
        raise ValueError("tile grid is empty")
    ground = tiles.ground
    if np.isnan(ground).any():
        _, (ri, ci) = ndimage.distance_transform_edt(np.isnan(ground), return_indices=True)
        ground = ground[ri, ci]
    z = _consensus(ground, tiles.corner_x, tiles.corner_y)
    for _ in range(iterations):
        ii, jj, kk, val = _plane_proposals(_spread(z), outlier_threshold)
        if ii.size == 0:
            break
        ci = ii + _CORNER_OFFSETS[kk, 0]
        cj = jj + _CORNER_OFFSETS[kk, 1]
        acc = np.zeros_like(z)
        cnt = np.zeros_like(z)
        np.add.at(acc, (ci, cj), val)
        np.add.at(cnt, (ci, cj), 1.0)
        z = np.where(cnt > 0, acc / np.maximum(cnt, 1.0), z)

    cap = _corner_cap(tiles.dsm_max)
    z = np.where(np.isfinite(cap), np.minimum(z, cap), z)
    return replace(tiles, ground=ground, estimates=_spread(z), corners=z)


def _corner_cap(dsm_max: np.ndarray) -> np.ndarray:
    r, c = dsm_max.shape
    cap = np.full((r + 1, c + 1), -np.inf)
    for di, dj in ((0, 0), (0, 1), (1, 0), (1, 1)):
        block = np.where(np.isnan(dsm_max), -np.inf, dsm_max)
        cap[di:di + r, dj:dj + c] = np.maximum(cap[di:di + r, dj:dj + c], block)
    cap[np.isneginf(cap)] = np.nan
    return cap


def clamp_to_surface(tiles: TileGrid, dsm: RasterGrid, origin: LVCSOrigin, mask=None) -> TileGrid:
    """Lower corners until the triangulated DTM lies on or below the DSM.

    Every valid, unmasked DSM sample at or above its tile's ground-bin floor
    is checked against the surface. Each triangle's largest excess is
    subtracted from all three of its corners (a corner shared by several
    triangles takes the largest), which puts the whole triangle at or below
    each checked sample; a margin of 1e-9 of the elevation magnitude absorbs
    rounding. Samples below the floor are the low outliers the
    histogram already rejected, so they do not pull the surface down.
    """
    if tiles.corners is None:
        raise ValueError("tile grid has not been smoothed")
    keep = dsm.valid_mask()
    if mask is not None:
        m = mask.samples[0] if isinstance(mask, RasterGrid) else np.asarray(mask)
        keep &= m == 0
    xs, ys = dsm.transform.pixel_centers(origin)
    gx, gy = np.meshgrid(xs, ys)
    x, y, zd = gx[keep], gy[keep], dsm.samples[0][keep]
    i, j, s, t = tiles.locate(x, y)
    if tiles.floor is not None:
        fl = tiles.floor[i, j]
        ok = ~(zd < fl)              # NaN floor keeps the sample
        x, y, zd, i, j, s, t = x[ok], y[ok], zd[ok], i[ok], j[ok], s[ok], t[ok]
    excess = tiles.elevation_at(x, y) - zd
    r, c = tiles.shape
    tri = np.zeros((r, c, 2))
    np.maximum.at(tri, (i, j, (t < s).astype(np.int64)), excess)
    # margin so re-interpolating the lowered corners cannot round back above
    tol = 1e-9 * max(1.0, float(np.max(np.abs(zd)))) if zd.size else 0.0
    tri = np.where(tri > 0, tri + tol, 0.0)
    lower = tri[:, :, 0]       # NW, SW, SE
    upper = tri[:, :, 1]       # NW, NE, SE
    drop = np.zeros((r + 1, c + 1))
    for (di, dj), part in (((0, 0), np.maximum(lower, upper)), ((1, 0), lower), ((0, 1), upper),
                           ((1, 1), np.maximum(lower, upper))):
        drop[di:di + r, dj:dj + c] = np.maximum(drop[di:di + r, dj:dj + c], part)
    z = tiles.corners - drop
    return replace(tiles, estimates=_spread(z), corners=z)


# --- mesh -----------------------------------------------------------------------

def triangulate_dtm(tiles: TileGrid, origin: LVCSOrigin, extent=None) -> TriangleMesh:
    """Regular corner-grid mesh, two triangles per tile split NW-SE.

    Vertices are row-major from the north-west corner. ``extent`` (a
    GeoTransform or an ``(xmin, xmax, ymin, ymax)`` tuple) sets the UV
    normalization; it defaults to the tile grid's own bounds.
    """
    if tiles.corners is None:
        raise ValueError("tile grid has not been smoothed")
    z = tiles.corners
    r1, c1 = z.shape
    xs, ys = np.meshgrid(tiles.corner_x, tiles.corner_y)
    verts = np.column_stack([xs.ravel(), ys.ravel(), z.ravel() - origin.elev])
    if extent is None:
        ext = (tiles.corner_x[0], tiles.corner_x[-1], tiles.corner_y[-1], tiles.corner_y[0])
    elif isinstance(extent, GeoTransform):
        ext = extent.extent(origin)
    else:
        ext = tuple(extent)
    uv = uv_from_xy(verts[:, 0], verts[:, 1], ext)
    ii, jj = np.meshgrid(np.arange(r1 - 1), np.arange(c1 - 1), indexing="ij")
    a = (ii * c1 + jj).ravel()
    b, c, d = a + 1, a + c1, a + c1 + 1     # NE, SW, SE
    tris = np.empty((2 * a.size, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, c, d])
    tris[1::2] = np.column_stack([a, d, b])
    return TriangleMesh(verts, uv, tris, name="terrain")


def write_tile_grid(tiles: TileGrid, path) -> None:
    Path(path).write_text(tiles.to_json() + "\n", encoding="utf-8")


def read_tile_grid(path) -> TileGrid:
    return TileGrid.from_json(Path(path).read_text(encoding="utf-8"))

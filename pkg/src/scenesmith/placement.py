"""Procedural placement: cars along roads and in parking rows, density-driven scatter."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from . import rng as rngmod
from .geo import LVCSOrigin, RasterGrid, lvcs_from_geodetic
from .materials import MaterialMap

log = logging.getLogger(__name__)

ROAD_KINDS = ("road", "path")
Elevation = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RoadEdge:
    a: int
    b: int
    lanes: int = 2
    kind: str = "road"


@dataclass
class RoadNetwork:
    nodes: np.ndarray                  # (N, 3) LVCS
    edges: list[RoadEdge]

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 3)
        for e in self.edges:
            if e.kind not in ROAD_KINDS:
                raise ValueError(f"unknown edge kind {e.kind!r}")
            if not (0 <= e.a < len(self.nodes) and 0 <= e.b < len(self.nodes)) or e.a == e.b:
                raise ValueError(f"bad edge endpoints ({e.a}, {e.b})")
            if e.lanes < 1:
                raise ValueError("lanes must be >= 1")
            if self.length(e) <= 0:
                raise ValueError("zero-length edge")

    def length(self, e: RoadEdge) -> float:
        d = self.nodes[e.b, :2] - self.nodes[e.a, :2]
        return float(np.hypot(d[0], d[1]))

    def direction(self, e: RoadEdge) -> np.ndarray:
        d = self.nodes[e.b, :2] - self.nodes[e.a, :2]
        return d / np.hypot(d[0], d[1])


@dataclass(frozen=True)
class PlacementRecord:
    asset_id: str
    position: tuple[float, float, float]
    heading: float
    scale: float = 1.0
    material_variant: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not -math.pi <= self.heading <= math.pi:
            raise ValueError("heading outside [-pi, pi]")


@dataclass
class DensityMap:
    grid: RasterGrid
    max_count: Optional[int] = None

    def __post_init__(self):
        v = self.grid.samples[0]
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density must be finite and >= 0")


@dataclass(frozen=True)
class ParkingRow:
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    spot_spacing: float = 2.5
    side_offset: float = 2.5

    def __post_init__(self):
        if not self.spot_spacing > 0:
            raise ValueError("spot_spacing must be positive")
        if self.length < self.spot_spacing:
            raise ValueError("row shorter than one spot")

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])


@dataclass(frozen=True)
class AssetEntry:
    mesh: str
    variants: int = 1
    radius: float = 1.0

    def __post_init__(self):
        if self.variants < 1:
            raise ValueError("variant count must be >= 1")


@dataclass
class AssetCatalog:
    entries: dict[str, AssetEntry] = field(default_factory=dict)

    def ids(self) -> list[str]:
        if not self.entries:
            raise ValueError("asset catalog is empty")
        return sorted(self.entries)

    def draw(self, gen: np.random.Generator) -> tuple[str, int]:
        ids = self.ids()
        aid = ids[int(gen.integers(len(ids)))]
        return aid, int(gen.integers(self.entries[aid].variants))


def wrap_angle(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def right_vector(v) -> np.ndarray:
    """Unit vector pointing to the right of the unit direction ``v``."""
    v = np.asarray(v, dtype=float)
    n = math.hypot(v[0], v[1])
    if n == 0:
        raise ValueError("zero direction vector")
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"direction must be unit length (got {n})")
    theta = math.atan2(v[1], v[0]) - math.pi / 2
    return np.array([math.cos(theta), math.sin(theta)])


def _z(elevation: Optional[Elevation], x: float, y: float, default: float) -> float:
    if elevation is None:
        return float(default)
    return float(np.asarray(elevation(np.array([x]), np.array([y]))).ravel()[0])


def road_slots(length: float, min_interval: float) -> np.ndarray:
    """Arc-length positions ``min_interval/2 + k * min_interval`` up to ``length``."""
    if not min_interval > 0:
        raise ValueError("min_interval must be positive")
    if length < min_interval / 2:
        return np.zeros(0)
    n = int(math.floor((length - min_interval / 2) / min_interval + 1e-9)) + 1
    return min_interval / 2 + np.arange(n) * min_interval


def place_cars_on_roads(network: RoadNetwork, catalog: AssetCatalog, lane_offset: float = 4.0,
                        min_interval: float = 10.0, occupancy_p: float = 0.15, seed: int = 0,
                        elevation: Optional[Elevation] = None) -> list[PlacementRecord]:
    """Cars in both directions along every ``road`` edge.

    Slots sit every ``min_interval`` along the centerline; each slot and
    direction is occupied with probability ``occupancy_p``. A car is moved
    ``lane_offset / 2`` to the right of its travel direction and faces it.
    Each edge draws from its own stream, so output is independent of edge
    processing order.
    """
    if not 0.0 <= occupancy_p <= 1.0:
        raise ValueError("occupancy_p must be in [0, 1]")
    catalog.ids()
    out = []
    for ei, e in enumerate(network.edges):
        if e.kind != "road":
            continue
        gen = rngmod.stream(seed, "road", ei)
        slots = road_slots(network.length(e), min_interval)
        occupied = gen.random((len(slots), 2)) < occupancy_p
        a = network.nodes[e.a]
        b = network.nodes[e.b]
        v = network.direction(e)
        for k, s in enumerate(slots):
            t = s / network.length(e)
            center = a + t * (b - a)
            for rev in (0, 1):
                if not occupied[k, rev]:
                    continue
                d = -v if rev else v
                r = right_vector(d)
                x, y = center[:2] + 0.5 * lane_offset * r
                aid, var = catalog.draw(gen)
                out.append(PlacementRecord(aid, (float(x), float(y), _z(elevation, x, y, center[2])),
                                           math.atan2(d[1], d[0]), 1.0, var))
    return out


def place_parking(rows: Sequence[ParkingRow], catalog: AssetCatalog, occupancy_p: float = 0.7,
                  seed: int = 0, elevation: Optional[Elevation] = None,
                  reverse_p: float = 0.1, heading_jitter_deg: float = 3.0,
                  lateral_jitter: float = 0.2) -> list[PlacementRecord]:
    """Fill parking rows; each spot is occupied with probability ``occupancy_p``.

    Spot i of a row sits at ``start + (i + 0.5) * spacing * dir`` moved
    ``side_offset`` to the right of the row. Cars face away from the row line
    into the spot, except a ``reverse_p`` fraction that backed in. Heading
    and position along the row get small uniform jitter.
    """
    if not 0.0 <= occupancy_p <= 1.0:
        raise ValueError("occupancy_p must be in [0, 1]")
    catalog.ids()
    out = []
    jit = math.radians(heading_jitter_deg)
    for ri, row in enumerate(rows):
        gen = rngmod.stream(seed, "parking", ri)
        start = np.asarray(row.start, dtype=float)
        end = np.asarray(row.end, dtype=float)
        length = row.length
        dvec = (end[:2] - start[:2]) / length
        r = right_vector(dvec)
        n = int(math.floor(length / row.spot_spacing + 1e-9))
        occupied = gen.random(n) < occupancy_p
        face = math.atan2(r[1], r[0])
        for i in np.flatnonzero(occupied):
            backed = gen.random() < reverse_p
            dh = gen.uniform(-jit, jit)
            dl = gen.uniform(-lateral_jitter, lateral_jitter)
            aid, var = catalog.draw(gen)
            s = (i + 0.5) * row.spot_spacing + dl
            base = start + (s / length) * (end - start)
            x, y = base[:2] + row.side_offset * r
            heading = wrap_angle(face + (math.pi if backed else 0.0) + dh)
            out.append(PlacementRecord(aid, (float(x), float(y), _z(elevation, x, y, base[2])),
                                       heading, 1.0, var))
    return out


def density_map_from_materials(mmap: MaterialMap, class_weights: Mapping[Union[int, str], float]) -> DensityMap:
    """Per-pixel density from material weights.

    Keys are library ids (int) or names / class tags (str, case-insensitive).
    A material takes its id weight, else its name weight, else the first of
    its tags with a weight, else 0. Nodata pixels get 0.
    """
    by_id = {int(k): float(v) for k, v in class_weights.items() if not isinstance(k, str)}
    by_str = {k.lower(): float(v) for k, v in class_weights.items() if isinstance(k, str)}
    if any(v < 0 for v in list(by_id.values()) + list(by_str.values())):
        raise ValueError("weights must be >= 0")
    lut = np.zeros(mmap.n + 1)
    for i, rec in enumerate(mmap.palette):
        w = by_id.get(rec.id)
        if w is None:
            w = by_str.get(rec.name.lower())
        if w is None:
            w = next((by_str[t.lower()] for t in rec.class_tags if t.lower() in by_str), 0.0)
        lut[i] = w
    labels = mmap.labels()
    dens = np.where(labels >= 0, lut[np.clip(labels, 0, None)], 0.0)
    return DensityMap(RasterGrid(mmap.grid.transform, dens, None))


def place_by_density(density: DensityMap, catalog: AssetCatalog, total_count: int, min_separation: float,
                     scale_range: tuple[float, float] = (0.8, 1.2), seed: int = 0,
                     origin: Optional[LVCSOrigin] = None, elevation: Optional[Elevation] = None,
                     batch: int = 4096) -> list[PlacementRecord]:
    """Scatter instances with probability proportional to density.

    Each attempt picks a pixel by density, a uniform offset inside it, a
    uniform heading and scale, and is rejected if it lands within
    ``min_separation`` of an accepted instance. Stops after ``total_count``
    acceptances or ``50 * total_count`` attempts (logging a warning on a
    shortfall). Coordinates are LVCS when ``origin`` is given, else the
    raster's own pixel frame scaled by pixel size with the NW corner at 0.
    """
    if total_count < 0:
        raise ValueError("total_count must be >= 0")
    lo, hi = scale_range
    if not 0 < lo <= hi:
        raise ValueError("scale_range must satisfy 0 < lo <= hi")
    if total_count == 0:
        return []
    d = density.grid.samples[0].ravel()
    cdf = np.cumsum(d)
    if not cdf[-1] > 0:
        raise ValueError("density map is all zero")
    ids = catalog.ids()
    t = density.grid.transform
    x0, y0 = t.corner(origin) if origin is not None else (0.0, 0.0)
    w = t.width
    gen = rngmod.stream(seed, "density")
    sep2 = min_separation * min_separation
    buckets: dict[tuple[int, int], list[tuple[float, float]]] = {}
    acc: list[tuple] = []
    attempts, max_attempts = 0, 50 * total_count
    while len(acc) < total_count and attempts < max_attempts:
        nb = min(batch, max_attempts - attempts)
        u = gen.random((nb, 4))
        heading = gen.uniform(-math.pi, math.pi, nb)
        scale = gen.uniform(lo, hi, nb)
        asset = gen.integers(len(ids), size=nb)
        pix = np.minimum(np.searchsorted(cdf, u[:, 0] * cdf[-1], side="right"), len(d) - 1)
        while np.any(d[pix] <= 0):          # rounding at the very top of the cdf
            pix[d[pix] <= 0] -= 1
        rows, cols = np.divmod(pix, w)
        xs = x0 + (cols + u[:, 1]) * t.pixel_size_x
        ys = y0 - (rows + u[:, 2]) * t.pixel_size_y
        for k in range(nb):
            attempts += 1
            x, y = float(xs[k]), float(ys[k])
            if min_separation > 0:
                bi, bj = int(math.floor(x / min_separation)), int(math.floor(y / min_separation))
                if any((px - x) ** 2 + (py - y) ** 2 < sep2
                       for di in (-1, 0, 1) for dj in (-1, 0, 1)
                       for px, py in buckets.get((bi + di, bj + dj), ())):
                    continue
                buckets.setdefault((bi, bj), []).append((x, y))
            aid = ids[int(asset[k])]
            acc.append((aid, x, y, float(heading[k]), float(scale[k]),
                        int(u[k, 3] * catalog.entries[aid].variants)))
            if len(acc) >= total_count:
                break
    if len(acc) < total_count:
        log.warning("placed %d of %d instances after %d attempts", len(acc), total_count, attempts)
    if not acc:
        return []
    xa = np.array([a[1] for a in acc])
    ya = np.array([a[2] for a in acc])
    za = np.zeros(len(acc)) if elevation is None else np.asarray(elevation(xa, ya), dtype=float).ravel()
    return [PlacementRecord(aid, (x, y, float(z)), h, sc, var)
            for (aid, x, y, h, sc, var), z in zip(acc, za)]


# --- vector input -----------------------------------------------------------------

def load_vectors(path, origin: LVCSOrigin) -> tuple[RoadNetwork, list[ParkingRow]]:
    """Read roads, paths and parking rows from a GeoJSON FeatureCollection.

    Only LineString features are used. Properties: ``kind`` (road, path or
    parking; default road), ``lanes`` (default 2), and for parking rows
    ``spot_spacing`` and ``side_offset`` in meters. Coordinates are
    ``[lon, lat]`` or ``[lon, lat, elev]``. Road vertices with identical
    coordinates become one network node.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("type") != "FeatureCollection":
        raise ValueError("expected a GeoJSON FeatureCollection")
    nodes: list[tuple[float, float, float]] = []
    index: dict[tuple[float, float, float], int] = {}
    edges: list[RoadEdge] = []
    rows: list[ParkingRow] = []
    for feat in data.get("features", []):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            continue
        props = feat.get("properties") or {}
        kind = props.get("kind", "road")
        coords = geom["coordinates"]
        pts = []
        for c in coords:
            lon, lat = float(c[0]), float(c[1])
            elev = float(c[2]) if len(c) > 2 else origin.elev
            p = lvcs_from_geodetic(lat, lon, elev, origin)
            pts.append((p.x, p.y, p.z))
        if kind == "parking":
            for p, q in zip(pts[:-1], pts[1:]):
                rows.append(ParkingRow(p, q, float(props.get("spot_spacing", 2.5)),
                                       float(props.get("side_offset", 2.5))))
            continue
        ids = []
        for c, p in zip(coords, pts):
            key = tuple(float(v) for v in c[:3])
            if key not in index:
                index[key] = len(nodes)
                nodes.append(p)
            ids.append(index[key])
        for a, b in zip(ids[:-1], ids[1:]):
            if a != b:
                edges.append(RoadEdge(a, b, int(props.get("lanes", 2)), kind))
    return RoadNetwork(np.array(nodes).reshape(-1, 3), edges), rows

"""Coordinate frames, raster grids and DSM point clouds.

All world geometry lives in a Local Vertical Coordinate System (LVCS): a
Euclidean east/north/up frame in meters anchored at a geodetic origin. The
mapping is a local tangent plane using the WGS-84 meridional and prime
vertical radii at the origin latitude, which keeps it exactly invertible.

Rasters use a pixel-center convention everywhere: the georeferenced corner
(``origin_lon``, ``origin_lat``) is the outer north-west corner of pixel
(0, 0), and pixel (row, col) sits at ``(col + 0.5, row + 0.5)`` pixel sizes
east/south of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

DEFAULT_NODATA = -9999.0


class DomainError(ValueError):
    """Input outside the domain an operation is defined on."""


def _check_latlon(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise DomainError(f"non-finite coordinate ({lat}, {lon})")
    if not -90.0 <= lat <= 90.0:
        raise DomainError(f"latitude {lat} outside [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise DomainError(f"longitude {lon} outside [-180, 180]")


@dataclass(frozen=True)
class LVCSOrigin:
    lat: float
    lon: float
    elev: float = 0.0

    def __post_init__(self):
        _check_latlon(self.lat, self.lon)
        if not math.isfinite(self.elev):
            raise DomainError("origin elevation must be finite")

    def radii(self) -> tuple[float, float]:
        """Meridional (M) and prime-vertical (N) radii of curvature at the origin."""
        s = math.sin(math.radians(self.lat))
        w = 1.0 - WGS84_E2 * s * s
        n = WGS84_A / math.sqrt(w)
        m = WGS84_A * (1.0 - WGS84_E2) / w**1.5
        return m, n

    def meters_per_degree(self) -> tuple[float, float]:
        """(east, north) meters per degree of longitude/latitude at the origin."""
        m, n = self.radii()
        rad = math.pi / 180.0
        return n * math.cos(math.radians(self.lat)) * rad, m * rad


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def lvcs_from_geodetic(lat, lon, elev, origin: LVCSOrigin):
    """Convert geodetic coordinates to LVCS east/north/up meters.

    Accepts scalars or numpy arrays. Scalars return a :class:`Point3`.
    Points must be within 1 degree of the origin in both latitude and
    longitude; the tangent-plane approximation is not meant for more.
    """
    scalar = np.ndim(lat) == 0 and np.ndim(lon) == 0 and np.ndim(elev) == 0
    lat_a = np.asarray(lat, dtype=float)
    lon_a = np.asarray(lon, dtype=float)
    elev_a = np.asarray(elev, dtype=float)
    if not (np.all(np.isfinite(lat_a)) and np.all(np.isfinite(lon_a)) and np.all(np.isfinite(elev_a))):
        raise DomainError("non-finite geodetic coordinate")
    if np.any(np.abs(lat_a) > 90.0) or np.any(np.abs(lon_a) > 180.0):
        raise DomainError("geodetic coordinate out of range")
    dlat = lat_a - origin.lat
    dlon = lon_a - origin.lon
    if np.any(np.abs(dlat) >= 1.0) or np.any(np.abs(dlon) >= 1.0):
        raise DomainError("point is 1 degree or more from the LVCS origin")
    east, north = origin.meters_per_degree()
    x = dlon * east
    y = dlat * north
    z = elev_a - origin.elev
    if scalar:
        return Point3(float(x), float(y), float(z))
    return x, y, z


def geodetic_from_lvcs(p, origin: LVCSOrigin):
    """Inverse of :func:`lvcs_from_geodetic`; returns ``(lat, lon, elev)``."""
    x, y, z = (np.asarray(c, dtype=float) for c in p)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise DomainError("non-finite LVCS point")
    east, north = origin.meters_per_degree()
    lat = origin.lat + y / north
    lon = origin.lon + x / east
    elev = origin.elev + z
    if np.ndim(lat) == 0:
        return float(lat), float(lon), float(elev)
    return lat, lon, elev


@dataclass(frozen=True)
class GeoTransform:
    origin_lon: float
    origin_lat: float
    pixel_size_x: float
    pixel_size_y: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.pixel_size_x > 0 and self.pixel_size_y > 0):
            raise ValueError("pixel sizes must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("raster must be at least 1x1")

    def corner(self, origin: LVCSOrigin) -> tuple[float, float]:
        """LVCS (x, y) of the outer north-west corner."""
        p = lvcs_from_geodetic(self.origin_lat, self.origin_lon, origin.elev, origin)
        return p.x, p.y

    def pixel_centers(self, origin: LVCSOrigin) -> tuple[np.ndarray, np.ndarray]:
        """LVCS x of every column and y of every row (pixel centers)."""
        x0, y0 = self.corner(origin)
        xs = x0 + (np.arange(self.width) + 0.5) * self.pixel_size_x
        ys = y0 - (np.arange(self.height) + 0.5) * self.pixel_size_y
        return xs, ys

    def extent(self, origin: LVCSOrigin) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the outer pixel edges."""
        x0, y0 = self.corner(origin)
        return (x0, x0 + self.width * self.pixel_size_x,
                y0 - self.height * self.pixel_size_y, y0)

    def world_to_pixel(self, x, y, origin: LVCSOrigin):
        """Nearest (row, col) for LVCS points, clipped to the raster."""
        x0, y0 = self.corner(origin)
        col = np.floor((np.asarray(x, dtype=float) - x0) / self.pixel_size_x).astype(np.int64)
        row = np.floor((y0 - np.asarray(y, dtype=float)) / self.pixel_size_y).astype(np.int64)
        return np.clip(row, 0, self.height - 1), np.clip(col, 0, self.width - 1)

    def upsampled(self, factor: int) -> "GeoTransform":
        return GeoTransform(self.origin_lon, self.origin_lat,
                            self.pixel_size_x / factor, self.pixel_size_y / factor,
                            self.width * factor, self.height * factor)


def uv_from_xy(x, y, extent) -> np.ndarray:
    """Normalize LVCS (x, y) over a scene extent; north-west maps to (0, 1)."""
    xmin, xmax, ymin, ymax = extent
    u = (np.asarray(x, dtype=float) - xmin) / (xmax - xmin)
    v = (np.asarray(y, dtype=float) - ymin) / (ymax - ymin)
    return np.clip(np.stack([u, v], axis=-1), 0.0, 1.0)


@dataclass
class RasterGrid:
    """Multi-band raster stored as ``samples[band, row, col]`` in float64."""

    transform: GeoTransform
    samples: np.ndarray
    nodata: Optional[float] = DEFAULT_NODATA

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 2:
            s = s[None]
        if s.ndim != 3:
            raise ValueError("samples must be 2D or (bands, rows, cols)")
        if s.shape[1:] != (self.transform.height, self.transform.width):
            raise ValueError(
                f"samples {s.shape[1:]} do not match transform "
                f"{(self.transform.height, self.transform.width)}")
        self.samples = s

    @property
    def bands(self) -> int:
        return self.samples.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape[1], self.samples.shape[2]

    def valid_mask(self) -> np.ndarray:
        """True where no band holds the nodata sentinel (or NaN)."""
        ok = np.all(np.isfinite(self.samples), axis=0)
        if self.nodata is not None:
            ok &= np.all(self.samples != self.nodata, axis=0)
        return ok

    def band(self, i: int = 0) -> np.ndarray:
        return self.samples[i]

    def with_samples(self, samples, nodata=...) -> "RasterGrid":
        return RasterGrid(self.transform, samples, self.nodata if nodata is ... else nodata)


@dataclass
class PointCloud:
    points: np.ndarray
    source_pixel: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.source_pixel is None:
            self.source_pixel = np.full((len(self.points), 2), -1, dtype=np.int64)
        self.source_pixel = np.asarray(self.source_pixel, dtype=np.int64).reshape(-1, 2)
        if len(self.points) != len(self.source_pixel):
            raise ValueError("points and source_pixel lengths differ")

    def __len__(self):
        return len(self.points)

    def subset(self, index) -> "PointCloud":
        return PointCloud(self.points[index], self.source_pixel[index])


def dsm_to_pointcloud(dsm: RasterGrid, origin: LVCSOrigin, mask: RasterGrid | np.ndarray | None = None) -> PointCloud:
    """One LVCS point per valid, unmasked DSM pixel at its pixel center.

    A nonzero ``mask`` value excludes the pixel (tree and water filtering).
    """
    if dsm.bands != 1:
        raise ValueError("DSM must have exactly one band")
    keep = dsm.valid_mask()
    if mask is not None:
        m = mask.samples[0] if isinstance(mask, RasterGrid) else np.asarray(mask)
        if m.shape != keep.shape:
            raise ValueError(f"mask shape {m.shape} does not match DSM {keep.shape}")
        keep &= m == 0
    rows, cols = np.nonzero(keep)
    xs, ys = dsm.transform.pixel_centers(origin)
    z = dsm.samples[0, rows, cols] - origin.elev
    pts = np.column_stack([xs[cols], ys[rows], z])
    return PointCloud(pts, np.column_stack([rows, cols]))

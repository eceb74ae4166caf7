"""Per-cluster building modeling: planes, boundaries, snapping, extrusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from ..geo import LVCSOrigin, PointCloud, RasterGrid, dsm_to_pointcloud
from ..mesh import BuildingMesh
from ..terrain import TileGrid
from .alpha import DegenerateRegionError, alpha_boundary
from .edges import EdgeMap, dominant_axes
from .extrude import PlanarRegion, extrude_region
from .polygon import clean_boundary, simplify_polygon
from .ransac import RansacPriors, fit_planes_ransac
from .snapping import snap_boundary


@dataclass(frozen=True)
class BuildingParams:
    priors: RansacPriors = RansacPriors()
    alpha: float = 5.0
    min_area: float = 7.0
    simplify_tolerance: Optional[float] = None    # default: 1.5 x point spacing
    angle_tolerance_deg: float = 15.0
    min_height: float = 2.5
    min_cluster_pixels: int = 75
    snap: bool = True


@dataclass
class ClusterResult:
    index: int
    regions: list = field(default_factory=list)       # PlanarRegion
    meshes: list = field(default_factory=list)        # BuildingMesh
    records: list = field(default_factory=list)       # JSON-ready dicts
    theta0: Optional[float] = None


def height_above_ground(dsm: RasterGrid, tiles: TileGrid, origin: LVCSOrigin) -> np.ndarray:
    xs, ys = dsm.transform.pixel_centers(origin)
    gx, gy = np.meshgrid(xs, ys)
    h = dsm.samples[0] - tiles.elevation_at(gx, gy)
    h[~dsm.valid_mask()] = np.nan
    return h


def find_building_clusters(dsm: RasterGrid, tiles: TileGrid, origin: LVCSOrigin, exclude=None,
                           min_height: float = 2.5, min_pixels: int = 75) -> list[np.ndarray]:
    """Connected groups of pixels standing more than ``min_height`` above the DTM.

    ``exclude`` (nonzero = vegetation or water) removes pixels first. Each
    cluster is an ``(m, 2)`` array of (row, col); clusters come in raster
    order of their first pixel.
    """
    h = height_above_ground(dsm, tiles, origin)
    mask = np.nan_to_num(h, nan=-np.inf) > min_height
    if exclude is not None:
        ex = exclude.samples[0] if isinstance(exclude, RasterGrid) else np.asarray(exclude)
        mask &= ex == 0
    lab, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    out = []
    for k in range(1, n + 1):
        rc = np.argwhere(lab == k)
        if len(rc) >= min_pixels:
            out.append(rc)
    return out


def cluster_cloud(dsm: RasterGrid, origin: LVCSOrigin, pixels: np.ndarray) -> PointCloud:
    sel = np.ones(dsm.shape, dtype=np.uint8)
    sel[pixels[:, 0], pixels[:, 1]] = 0
    return dsm_to_pointcloud(dsm, origin, sel)


def cluster_axis(edges: Optional[EdgeMap], shape, pixels: np.ndarray, grow: int = 2) -> Optional[float]:
    """Dominant axis of edge pixels on and around the cluster, or None."""
    if edges is None:
        return None
    region = np.zeros(shape, dtype=bool)
    region[pixels[:, 0], pixels[:, 1]] = True
    region = ndimage.binary_dilation(region, iterations=grow)
    try:
        theta0, _ = dominant_axes(edges, region, refine=True)
    except ValueError:
        return None
    return theta0


def model_cluster(cloud: PointCloud, index: int, seed: int, params: BuildingParams,
                  tiles: TileGrid, origin: LVCSOrigin, extent, theta0: Optional[float] = None) -> ClusterResult:
    """Fit planes to one cluster and turn each into extruded roof regions."""
    res = ClusterResult(index, theta0=theta0)
    planes = fit_planes_ransac(cloud, params.priors, seed=seed, stream_index=index)
    if not planes:
        return res
    xy = cloud.points[:, :2]
    tol = params.simplify_tolerance
    if tol is None:
        spacing = float(np.median(cKDTree(xy).query(xy, k=2)[0][:, 1])) if len(xy) > 1 else 0.0
        tol = 1.5 * spacing
    floor_xy = cloud.points[:, :2]
    for k, plane in enumerate(planes):
        try:
            loops = alpha_boundary(cloud.points[plane.inliers, :2], params.alpha)
        except DegenerateRegionError:
            continue
        for loop in clean_boundary(loops, params.min_area):
            poly = simplify_polygon(loop, tol)
            if params.snap and theta0 is not None:
                poly = snap_boundary(poly, theta0, math.radians(params.angle_tolerance_deg))
            for final in clean_boundary([poly], params.min_area):
                region = PlanarRegion(plane, final)
                probe = np.vstack([final, floor_xy])
                ground = float(np.min(tiles.elevation_at(probe[:, 0], probe[:, 1]))) - origin.elev
                rid = len(res.regions)
                try:
                    mesh = extrude_region(region, ground, extent, source_region=rid)
                except ValueError:
                    continue
                mesh.name = f"building_{index:04d}_{rid:02d}"
                res.regions.append(region)
                res.meshes.append(mesh)
                res.records.append({
                    "cluster": index, "region": rid, "plane": k,
                    "normal": [float(v) for v in plane.normal], "d": float(plane.d),
                    "rms": float(plane.rms), "inliers": int(len(plane.inliers)),
                    "slope_deg": float(plane.slope_deg), "vertices": int(len(final)),
                    "ground_z": ground,
                })
    return res


def footprint_meshes(results: list[ClusterResult]) -> list[BuildingMesh]:
    return [m for r in results for m in r.meshes]

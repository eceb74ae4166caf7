"""Roof polygons extruded to the ground as closed-sided triangle meshes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..geo import uv_from_xy
from ..mesh import BuildingMesh
from .polygon import ear_clip, is_simple, orient_ccw
from .ransac import PlanePrimitive


@dataclass
class PlanarRegion:
    """Roof region: a plane and its boundary.

    The boundary is stored as horizontal (x, y) coordinates. A non-vertical
    plane is the graph of z(x, y), so this is the plane's own chart with
    basis U = (1, 0, -nx/nz), V = (0, 1, -ny/nz); lifting a vertex back onto
    the plane is exact.
    """

    plane: PlanePrimitive
    boundary: np.ndarray        # (n, 2) counter-clockwise, simple

    def lifted(self) -> np.ndarray:
        b = self.boundary
        return np.column_stack([b[:, 0], b[:, 1], self.plane.z_at(b[:, 0], b[:, 1])])


def extrude_region(region: PlanarRegion, ground_elev: float, extent=None,
                   source_region: Optional[int] = None) -> BuildingMesh:
    """Roof triangulated by ear clipping plus one wall quad per boundary edge.

    Vertices ``0..n-1`` are the roof corners on the plane and ``n..2n-1`` the
    same corners at ``ground_elev``; there is no floor. Triangles are
    counter-clockwise seen from outside. UVs normalize (x, y) over
    ``extent`` = (xmin, xmax, ymin, ymax), defaulting to the footprint bounds.
    """
    b = orient_ccw(np.asarray(region.boundary, dtype=float))
    n = len(b)
    if n < 3 or not is_simple(b):
        raise ValueError("roof boundary must be a simple polygon with >= 3 vertices")
    roof = np.column_stack([b, region.plane.z_at(b[:, 0], b[:, 1])])
    if not ground_elev < roof[:, 2].min():
        raise ValueError(f"ground elevation {ground_elev} is not below the roof (min {roof[:, 2].min()})")
    ground = np.column_stack([b, np.full(n, float(ground_elev))])
    verts = np.vstack([roof, ground])
    if extent is None:
        extent = (b[:, 0].min(), b[:, 0].max(), b[:, 1].min(), b[:, 1].max())
    uv = uv_from_xy(verts[:, 0], verts[:, 1], extent)

    roof_tris = ear_clip(b)
    i = np.arange(n)
    j = (i + 1) % n
    walls = np.empty((2 * n, 3), dtype=np.int64)
    walls[0::2] = np.column_stack([i, n + i, n + j])
    walls[1::2] = np.column_stack([i, n + j, j])
    tris = np.vstack([roof_tris, walls])
    return BuildingMesh(verts, uv, tris, name=f"building_{source_region if source_region is not None else 0}",
                        source_region=source_region, n_roof=len(roof_tris),
                        wall_pairs=[(int(a), int(c)) for a, c in zip(i, j)])

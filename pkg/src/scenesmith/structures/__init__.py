"""Compact building models from DSM point clouds."""

from .alpha import DegenerateRegionError, alpha_boundary
from .buildings import BuildingParams, ClusterResult, find_building_clusters, model_cluster
from .edges import EdgeMap, compute_edge_map, dominant_axes
from .extrude import PlanarRegion, extrude_region
from .polygon import clean_boundary, ear_clip, is_simple, polygon_area, simplify_polygon
from .ransac import PlanePrimitive, RansacPriors, fit_planes_ransac
from .snapping import snap_boundary

__all__ = [
    "DegenerateRegionError", "alpha_boundary", "BuildingParams", "ClusterResult",
    "find_building_clusters", "model_cluster", "EdgeMap", "compute_edge_map", "dominant_axes",
    "PlanarRegion", "extrude_region", "clean_boundary", "ear_clip", "is_simple", "polygon_area",
    "simplify_polygon", "PlanePrimitive", "RansacPriors", "fit_planes_ransac", "snap_boundary",
]

"""Canny edge maps and dominant edge orientation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..geo import RasterGrid

CANNY_SIGMA = 1.4
N_AXIS_BINS = 18
_BIN = math.pi / 2 / N_AXIS_BINS

# (drow, dcol) of the neighbour along the gradient for the four quantized directions
_NMS_OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1))


@dataclass
class EdgeMap:
    grid: RasterGrid                    # 1 band, values 0/1
    gradient_orientation: np.ndarray    # radians in the world frame (x east, y north); NaN off edges

    @property
    def edges(self) -> np.ndarray:
        return self.grid.samples[0] > 0


def _filled(image: RasterGrid) -> np.ndarray:
    a = image.samples[0].copy()
    valid = image.valid_mask()
    if valid.all():
        return a
    if not valid.any():
        return np.zeros_like(a)
    _, (ri, ci) = ndimage.distance_transform_edt(~valid, return_indices=True)
    return a[ri, ci]


def compute_edge_map(image: RasterGrid, low_threshold: float = 0.1, high_threshold: float = 0.2,
                     sigma: float = CANNY_SIGMA) -> EdgeMap:
    """Canny edges: Gaussian smoothing, Sobel gradients, non-maximum suppression, hysteresis.

    Thresholds are fractions of the largest gradient magnitude. Nodata pixels
    take their nearest valid value before filtering.
    """
    if image.bands != 1:
        raise ValueError("edge detection needs a single-band image")
    if high_threshold < low_threshold:
        raise ValueError("high_threshold must be >= low_threshold")
    if low_threshold < 0:
        raise ValueError("thresholds must be non-negative")
    img = _filled(image)
    smooth = ndimage.gaussian_filter(img, sigma, mode="nearest") if sigma > 0 else img
    gx = ndimage.sobel(smooth, axis=1, mode="nearest")   # toward +col (east)
    gy = ndimage.sobel(smooth, axis=0, mode="nearest")   # toward +row (south)
    mag = np.hypot(gx, gy)
    orient = np.full(img.shape, np.nan)
    peak = float(mag.max())
    if peak <= 1e-12 * max(1.0, float(np.abs(img).max())):
        return EdgeMap(image.with_samples(np.zeros_like(img), nodata=None), orient)

    # quantize the gradient direction to 0, 45, 90, 135 degrees in (row, col) space
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    sector = (np.floor((ang + 22.5) / 45.0).astype(np.int64)) % 4
    padded = np.pad(mag, 1)
    h, w = mag.shape
    nms = np.zeros_like(mag)
    for s, (dr, dc) in enumerate(_NMS_OFFSETS):
        nxt = padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
        prv = padded[1 - dr:1 - dr + h, 1 - dc:1 - dc + w]
        keep = (sector == s) & (mag >= prv) & (mag > nxt)
        nms[keep] = mag[keep]

    strong = nms >= high_threshold * peak
    weak = (nms >= low_threshold * peak) & (nms > 0)
    lab, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    hit = np.zeros(n + 1, dtype=bool)
    hit[lab[strong]] = True
    hit[0] = False
    edges = hit[lab]
    orient[edges] = np.arctan2(-gy[edges], gx[edges])
    return EdgeMap(image.with_samples(edges.astype(np.float64), nodata=None), orient)


def dominant_axes(edges: EdgeMap, region_mask=None, refine: bool = False) -> tuple[float, float]:
    """Primary structure axis in [0, pi/2) and the fraction of edge pixels supporting it.

    Edge orientations are folded modulo 90 degrees into 18 bins of 5 degrees
    centered on multiples of 5 degrees. The peak bin center is returned
    (lowest bin on ties); with ``refine`` the mean orientation inside the
    peak bin is returned instead.
    """
    sel = edges.edges & np.isfinite(edges.gradient_orientation)
    if region_mask is not None:
        sel &= np.asarray(region_mask, dtype=bool)
    theta = edges.gradient_orientation[sel]
    if theta.size == 0:
        raise ValueError("no edge pixels in region")
    return axes_from_orientations(theta, refine)


def axes_from_orientations(theta, refine: bool = False) -> tuple[float, float]:
    phi = np.mod(np.asarray(theta, dtype=float), math.pi / 2)
    b = np.rint(phi / _BIN).astype(np.int64) % N_AXIS_BINS
    counts = np.bincount(b, minlength=N_AXIS_BINS)
    peak = int(np.argmax(counts))
    conf = float(counts[peak] / phi.size)
    center = peak * _BIN
    if refine:
        dev = (phi[b == peak] - center + math.pi / 4) % (math.pi / 2) - math.pi / 4
        center = center + float(dev.mean())
    return float(center % (math.pi / 2)), conf


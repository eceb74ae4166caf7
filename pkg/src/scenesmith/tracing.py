"""Rebuild a reflectance curve from points traced on a plotted figure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralCurve


@dataclass(frozen=True)
class AxisCalibration:
    """Two reference clicks per axis: ``((pixel, value), (pixel, value))``.

    ``x_pairs`` map image column to wavelength (nm); ``y_pairs`` map image row
    to reflectance. Only linear axes are supported.
    """

    x_pairs: tuple[tuple[float, float], tuple[float, float]]
    y_pairs: tuple[tuple[float, float], tuple[float, float]]
    x_scale: str = "linear"
    y_scale: str = "linear"

    def __post_init__(self):
        for scale in (self.x_scale, self.y_scale):
            if scale != "linear":
                raise ValueError(f"only linear axes are supported, got {scale!r}")
        for pairs, axis in ((self.x_pairs, "x"), (self.y_pairs, "y")):
            (p0, v0), (p1, v1) = pairs
            if p0 == p1:
                raise ValueError(f"{axis}-axis calibration pixels coincide")
            if v0 == v1:
                raise ValueError(f"{axis}-axis calibration values coincide")

    @staticmethod
    def _affine(pairs, pix):
        (p0, v0), (p1, v1) = pairs
        return v0 + (np.asarray(pix, dtype=float) - p0) * (v1 - v0) / (p1 - p0)

    def to_data(self, u, v):
        """Pixel coordinates to (wavelength nm, reflectance)."""
        return self._affine(self.x_pairs, u), self._affine(self.y_pairs, v)


def trace_curve(calibration: AxisCalibration, traced_points, output_grid) -> SpectralCurve:
    """Map traced pixels to data space and resample them onto ``output_grid``.

    Points are sorted by wavelength; duplicates at the same wavelength are
    averaged. The output grid must lie inside the traced wavelength range,
    since nothing outside it was observed.
    """
    pts = np.asarray(traced_points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least 2 traced points")
    nm, refl = calibration.to_data(pts[:, 0], pts[:, 1])
    uniq, inverse = np.unique(nm, return_inverse=True)
    if len(uniq) < 2:
        raise ValueError("traced points span a single wavelength")
    mean_refl = np.bincount(inverse, weights=refl) / np.bincount(inverse)
    grid = np.asarray(output_grid, dtype=float)
    lo, hi = uniq[0], uniq[-1]
    tol = 1e-9 * max(1.0, abs(hi))
    if np.any(grid < lo - tol) or np.any(grid > hi + tol):
        raise ValueError(f"output grid extends outside traced range [{lo}, {hi}] nm")
    return SpectralCurve(grid, np.interp(grid, uniq, mean_refl))

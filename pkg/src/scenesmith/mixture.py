"""Material mixture maps: upsampled, blurred, renormalized class indicators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geo import RasterGrid
from .materials import MaterialMap


@dataclass
class MixtureMap:
    grid: RasterGrid          # one band per palette entry
    upsample_factor: int
    sigma: float


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian sampled at integer offsets, radius ceil(3 sigma)."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return np.ones(1)
    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=float)
    with np.errstate(over="ignore"):    # tiny sigma: off-center taps go to exp(-inf) = 0
        k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def fill_nodata_labels(labels: np.ndarray) -> np.ndarray:
    """Give nodata (-1) pixels the label of their nearest valid pixel."""
    bad = labels < 0
    if not bad.any():
        return labels
    if bad.all():
        raise ValueError("material map has no valid pixels")
    _, (ri, ci) = ndimage.distance_transform_edt(bad, return_indices=True)
    return labels[ri, ci]


def build_mixture_map(mmap: MaterialMap, upsample_factor: int = 2, sigma: float = 1.5) -> MixtureMap:
    """Turn a single-label material map into per-material abundance channels.

    The label image is upsampled by pixel duplication, split into one
    indicator channel per palette entry, each channel is blurred with a
    separable Gaussian (reflective border), and every pixel is L1-normalized
    across channels. ``sigma`` is in upsampled pixels. Nodata pixels take
    their nearest valid label first.
    """
    if upsample_factor < 1 or int(upsample_factor) != upsample_factor:
        raise ValueError("upsample_factor must be an integer >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    labels = fill_nodata_labels(mmap.labels())
    up = np.repeat(np.repeat(labels, upsample_factor, axis=0), upsample_factor, axis=1)
    kernel = gaussian_kernel(sigma)
    n = mmap.n
    out = np.empty((n,) + up.shape)
    for i in range(n):
        chan = (up == i).astype(np.float64)
        if sigma > 0:
            chan = ndimage.correlate1d(chan, kernel, axis=0, mode="reflect")
            chan = ndimage.correlate1d(chan, kernel, axis=1, mode="reflect")
        out[i] = chan
    total = out.sum(axis=0)
    out /= total
    np.clip(out, 0.0, 1.0, out=out)
    grid = RasterGrid(mmap.grid.transform.upsampled(upsample_factor), out, None)
    return MixtureMap(grid, upsample_factor, float(sigma))

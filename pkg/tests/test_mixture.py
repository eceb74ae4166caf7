import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import grid_at
from scenesmith.materials import map_from_labels
from scenesmith.mixture import build_mixture_map, fill_nodata_labels, gaussian_kernel
from scenesmith.spectral import MaterialRecord, SpectralCurve

RECS = [MaterialRecord(i, f"m{i}", (), SpectralCurve(np.array([400.0, 1040.0]), np.array([0.1 * (i + 1)] * 2)))
        for i in range(4)]


def mmap(origin, labels):
    labels = np.asarray(labels)
    n = int(labels.max()) + 1
    return map_from_labels(grid_at(origin, np.zeros(labels.shape)), labels, RECS[:n])


def explicit_blur(chan, sigma):
    """Direct 2D sum of the separable Gaussian with mirrored borders."""
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    h, w = chan.shape
    out = np.zeros_like(chan)

    def mirror(i, n):
        while i < 0 or i >= n:
            i = -i - 1 if i < 0 else 2 * n - i - 1
        return i

    for y in range(h):
        for x in range(w):
            s = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    s += k[dy + r] * k[dx + r] * chan[mirror(y + dy, h), mirror(x + dx, w)]
            out[y, x] = s
    return out


def test_single_material(origin):
    m = build_mixture_map(mmap(origin, np.zeros((4, 4), dtype=int)), 2, 1.5)
    assert m.grid.bands == 1 and np.all(m.grid.samples == 1.0)


def test_sigma_zero_one_hot(origin):
    lab = np.random.default_rng(0).integers(0, 3, (6, 5))
    lab[0, :3] = [0, 1, 2]
    m = build_mixture_map(mmap(origin, lab), 2, 0.0)
    up = np.repeat(np.repeat(lab, 2, 0), 2, 1)
    for i in range(3):
        assert np.array_equal(m.grid.samples[i], (up == i).astype(float))


def test_far_from_boundary_pure(origin):
    lab = np.zeros((16, 16), dtype=int)
    lab[:, 8:] = 1
    m = build_mixture_map(mmap(origin, lab), 2, 1.5)
    assert abs(m.grid.samples[0, 10, 2] - 1.0) < 1e-6
    assert abs(m.grid.samples[1, 10, 30] - 1.0) < 1e-6


def test_seam_against_explicit_convolution(origin):
    lab = np.zeros((16, 16), dtype=int)
    lab[:, 8:] = 1
    m = build_mixture_map(mmap(origin, lab), 2, 1.5)
    up = np.repeat(np.repeat(lab, 2, 0), 2, 1)
    oracle = np.array([explicit_blur((up == i).astype(float), 1.5) for i in range(2)])
    oracle /= oracle.sum(axis=0)
    assert np.max(np.abs(m.grid.samples - oracle)) < 1e-12
    # the seam lies between upsampled columns 15 and 16
    seam = 0.5 * (m.grid.samples[:, 16, 15] + m.grid.samples[:, 16, 16])
    assert np.allclose(seam, [0.5, 0.5], atol=1e-6)
    assert np.allclose(oracle[:, 16, 15] + oracle[:, 16, 16], [1.0, 1.0], atol=1e-6)


@given(arrays(np.int64, st.tuples(st.integers(1, 9), st.integers(1, 9)), elements=st.integers(0, 3)),
       st.integers(1, 3), st.floats(0, 3))
def test_abundances_sum_to_one(origin, lab, factor, sigma):
    lab = lab.copy()
    lab.flat[0] = lab.max()  # palette covers 0..max
    m = build_mixture_map(mmap(origin, lab), factor, sigma)
    s = m.grid.samples
    assert np.all(np.abs(s.sum(axis=0) - 1) < 1e-6)
    assert s.min() >= 0 and s.max() <= 1


def test_nodata_filled():
    lab = np.array([[0, -1, 1]])
    assert fill_nodata_labels(lab).tolist()[0] in ([0, 0, 1], [0, 1, 1])


def test_bad_parameters(origin):
    with pytest.raises(ValueError):
        build_mixture_map(mmap(origin, np.zeros((2, 2), dtype=int)), 0, 1.0)
    with pytest.raises(ValueError):
        gaussian_kernel(-1)

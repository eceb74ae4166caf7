import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scenesmith.envi import (EnviError, EnviTruncatedError, read_band_names, read_envi_raster,
                             write_envi_raster)
from scenesmith.geo import GeoTransform, RasterGrid

T = GeoTransform(-77.0, 40.0, 0.5, 0.5, 2, 2)


def test_float32_round_trip(tmp_path):
    g = RasterGrid(T, np.array([[1.5, -2.25], [3.0, 1e-3]], dtype=np.float32), None)
    write_envi_raster(g, tmp_path / "a.hdr")
    back = read_envi_raster(tmp_path / "a.hdr")
    assert np.array_equal(back.samples, g.samples)
    assert back.transform == T


@pytest.mark.parametrize("dtype", ["uint8", "uint16", "float32", "float64"])
@pytest.mark.parametrize("interleave", ["bsq", "bil", "bip"])
@pytest.mark.parametrize("byte_order", [0, 1])
def test_round_trip_matrix(tmp_path, dtype, interleave, byte_order):
    gen = np.random.default_rng(0)
    t = GeoTransform(10.0, 20.0, 1.0, 2.0, 5, 4)
    cube = gen.integers(0, 200, (3, 4, 5)).astype(float)
    if dtype.startswith("float"):
        cube = cube / 7.0
        cube = cube.astype(np.float32).astype(float) if dtype == "float32" else cube
    g = RasterGrid(t, cube, None)
    write_envi_raster(g, tmp_path / "r.hdr", dtype=dtype, interleave=interleave, byte_order=byte_order,
                      band_names=["a", "b", "c"])
    back = read_envi_raster(tmp_path / "r.hdr")
    assert np.array_equal(back.samples, cube)
    assert read_band_names(tmp_path / "r.hdr") == ["a", "b", "c"]


def test_interleaves_decode_equal(tmp_path):
    gen = np.random.default_rng(1)
    g = RasterGrid(GeoTransform(0, 0, 1, 1, 6, 3), gen.random((4, 3, 6)), None)
    write_envi_raster(g, tmp_path / "bsq.hdr", dtype="float64", interleave="bsq")
    write_envi_raster(g, tmp_path / "bil.hdr", dtype="float64", interleave="bil")
    a = read_envi_raster(tmp_path / "bsq.hdr").samples
    b = read_envi_raster(tmp_path / "bil.hdr").samples
    assert np.array_equal(a, b)
    assert (tmp_path / "bsq.img").read_bytes() != (tmp_path / "bil.img").read_bytes()


@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_float64_round_trip_property(tmp_path_factory, cube):
    d = tmp_path_factory.mktemp("h")
    t = GeoTransform(0.0, 0.0, 1.0, 1.0, cube.shape[2], cube.shape[1])
    write_envi_raster(RasterGrid(t, cube, None), d / "x.hdr", dtype="float64")
    assert np.array_equal(read_envi_raster(d / "x.hdr").samples, cube)


def test_truncated_data(tmp_path):
    write_envi_raster(RasterGrid(T, np.ones((2, 2)), None), tmp_path / "t.hdr")
    data = (tmp_path / "t.img").read_bytes()
    (tmp_path / "t.img").write_bytes(data[:-4])
    with pytest.raises(EnviTruncatedError):
        read_envi_raster(tmp_path / "t.hdr")


def test_uint_range_checked(tmp_path):
    with pytest.raises(ValueError):
        write_envi_raster(RasterGrid(T, np.full((2, 2), 300.0), None), tmp_path / "u.hdr", dtype="uint8")


def test_bad_header(tmp_path):
    (tmp_path / "b.hdr").write_text("not envi\n")
    (tmp_path / "b.img").write_bytes(b"")
    with pytest.raises(EnviError):
        read_envi_raster(tmp_path / "b.hdr")


def test_band_name_commas_replaced(tmp_path):
    g = RasterGrid(T, np.ones((2, 2, 2)), None)
    write_envi_raster(g, tmp_path / "n.hdr", band_names=["a,b", "c"])
    assert read_band_names(tmp_path / "n.hdr") == ["a b", "c"]

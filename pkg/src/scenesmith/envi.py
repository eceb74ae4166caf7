"""ENVI raster I/O (ASCII ``.hdr`` + flat binary ``.img``).

Supported data types are 1 (uint8), 12 (uint16), 4 (float32) and 5 (float64)
in bsq, bil or bip interleave with either byte order. Georeferencing is kept
in a ``map info`` record whose pixel sizes are in meters::

    map info = {LVCS, 1, 1, <lon>, <lat>, <xsize>, <ysize>, WGS-84, units=Meters}
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .geo import DEFAULT_NODATA, GeoTransform, RasterGrid

DTYPES = {1: "u1", 12: "u2", 4: "f4", 5: "f8"}
DTYPE_CODES = {"uint8": 1, "uint16": 12, "float32": 4, "float64": 5}
INTERLEAVES = ("bsq", "bil", "bip")


class EnviError(ValueError):
    pass


class EnviHeaderError(EnviError):
    """Header is missing required keys or holds unparsable values."""


class EnviUnsupportedError(EnviError):
    """Header is well formed but declares something this reader does not do."""


class EnviTruncatedError(EnviError):
    """Binary file is shorter than the header promises."""


def parse_header(text: str) -> dict[str, str]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ENVI":
        raise EnviHeaderError("header must start with 'ENVI'")
    body = "\n".join(lines[1:])
    out: dict[str, str] = {}
    # values in braces may span lines
    for m in re.finditer(r"^\s*([^=\n]+?)\s*=\s*(\{[^}]*\}|[^\n]*)", body, flags=re.M):
        key = m.group(1).strip().lower()
        val = m.group(2).strip()
        if val.startswith("{"):
            val = val[1:-1].strip()
        out[key] = val
    return out


def _int_key(hdr, key):
    if key not in hdr:
        raise EnviHeaderError(f"header missing '{key}'")
    try:
        v = int(hdr[key])
    except ValueError as exc:
        raise EnviHeaderError(f"'{key}' is not an integer: {hdr[key]!r}") from exc
    if key != "data type" and v < 1:
        raise EnviHeaderError(f"'{key}' must be positive")
    return v


def _parse_map_info(value: str, width: int, height: int) -> GeoTransform:
    parts = [p.strip() for p in value.split(",")]
    try:
        ref_x, ref_y, lon, lat, sx, sy = (float(p) for p in parts[1:7])
    except (ValueError, IndexError) as exc:
        raise EnviHeaderError(f"malformed map info: {value!r}") from exc
    if (ref_x, ref_y) != (1.0, 1.0):
        raise EnviUnsupportedError("map info tie point must be pixel (1, 1)")
    try:
        return GeoTransform(lon, lat, sx, sy, width, height)
    except ValueError as exc:
        raise EnviHeaderError(str(exc)) from exc


def read_envi_raster(header_path, data_path=None) -> RasterGrid:
    """Read an ENVI raster. ``data_path`` defaults to the header with ``.img``."""
    header_path = Path(header_path)
    data_path = Path(data_path) if data_path is not None else header_path.with_suffix(".img")
    hdr = parse_header(header_path.read_text(encoding="ascii", errors="replace"))
    samples = _int_key(hdr, "samples")
    lines = _int_key(hdr, "lines")
    bands = _int_key(hdr, "bands")
    code = _int_key(hdr, "data type")
    if code not in DTYPES:
        raise EnviUnsupportedError(f"unsupported data type {code}")
    interleave = hdr.get("interleave", "bsq").lower()
    if interleave not in INTERLEAVES:
        raise EnviUnsupportedError(f"unsupported interleave {interleave!r}")
    try:
        order = int(hdr.get("byte order", "0"))
    except ValueError as exc:
        raise EnviHeaderError("byte order must be 0 or 1") from exc
    if order not in (0, 1):
        raise EnviHeaderError("byte order must be 0 or 1")
    offset = int(hdr.get("header offset", "0"))
    dtype = np.dtype(("<" if order == 0 else ">") + DTYPES[code])

    count = samples * lines * bands
    raw = data_path.read_bytes()
    need = offset + count * dtype.itemsize
    if len(raw) < need:
        raise EnviTruncatedError(
            f"{data_path.name}: {len(raw)} bytes, header requires {need}")
    arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    if interleave == "bsq":
        cube = arr.reshape(bands, lines, samples)
    elif interleave == "bil":
        cube = arr.reshape(lines, bands, samples).transpose(1, 0, 2)
    else:
        cube = arr.reshape(lines, samples, bands).transpose(2, 0, 1)

    if "map info" in hdr:
        transform = _parse_map_info(hdr["map info"], samples, lines)
    else:
        transform = GeoTransform(0.0, 0.0, 1.0, 1.0, samples, lines)
    nodata = DEFAULT_NODATA
    if "data ignore value" in hdr:
        try:
            nodata = float(hdr["data ignore value"])
        except ValueError as exc:
            raise EnviHeaderError("data ignore value is not a number") from exc
    return RasterGrid(transform, cube.astype(np.float64), nodata)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_envi_raster(grid: RasterGrid, header_path, data_path=None, *, dtype="float32",
                      interleave="bsq", byte_order=0, band_names=None) -> tuple[Path, Path]:
    """Write ``grid`` as ENVI. Returns the (header, data) paths written."""
    header_path = Path(header_path)
    data_path = Path(data_path) if data_path is not None else header_path.with_suffix(".img")
    if dtype not in DTYPE_CODES:
        raise EnviUnsupportedError(f"unsupported dtype {dtype!r}")
    if interleave not in INTERLEAVES:
        raise EnviUnsupportedError(f"unsupported interleave {interleave!r}")
    np_dtype = np.dtype(("<" if byte_order == 0 else ">") + DTYPES[DTYPE_CODES[dtype]])
    cube = grid.samples
    if np_dtype.kind == "u":
        info = np.iinfo(np_dtype)
        if np.any(cube < info.min) or np.any(cube > info.max) or np.any(cube != np.round(cube)):
            raise ValueError(f"samples not representable as {dtype}")
    if interleave == "bsq":
        out = cube
    elif interleave == "bil":
        out = cube.transpose(1, 0, 2)
    else:
        out = cube.transpose(1, 2, 0)
    t = grid.transform
    lines = [
        "ENVI",
        "description = {scenesmith raster}",
        f"samples = {t.width}",
        f"lines = {t.height}",
        f"bands = {grid.bands}",
        "header offset = 0",
        "file type = ENVI Standard",
        f"data type = {DTYPE_CODES[dtype]}",
        f"interleave = {interleave}",
        f"byte order = {byte_order}",
        "map info = {LVCS, 1, 1, %s, %s, %s, %s, WGS-84, units=Meters}" % (
            _fmt(t.origin_lon), _fmt(t.origin_lat), _fmt(t.pixel_size_x), _fmt(t.pixel_size_y)),
    ]
    if grid.nodata is not None:
        lines.append(f"data ignore value = {_fmt(grid.nodata)}")
    if band_names is not None:
        if len(band_names) != grid.bands:
            raise ValueError("band_names length must equal band count")
        lines.append("band names = {" + ", ".join(str(b).replace(",", " ") for b in band_names) + "}")
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header_path.write_text("\n".join(lines) + "\n", encoding="ascii")
    data_path.write_bytes(np.ascontiguousarray(out).astype(np_dtype).tobytes())
    return header_path, data_path


def read_band_names(header_path) -> list[str]:
    hdr = parse_header(Path(header_path).read_text(encoding="ascii"))
    if "band names" not in hdr:
        return []
    return [b.strip() for b in hdr["band names"].split(",")]

"""Synthetic end-to-end fixture: a 64 x 64 scene at 0.5 m with known truth.

``python -m scenesmith.fixtures DIR`` writes the rasters, a spectral
library, a GeoJSON road file and ``config.toml`` into ``DIR``.

Layout (LVCS meters, origin at the scene center, ground sloping gently):

* a two-lane east-west road along the south edge and a one-lane path
  running north from it
* a flat-roofed block (7 x 7 m) and a gable-roofed house (8 x 7 m)
* two trees, a soil patch and a small pond; everything else is grass
* one parking row west of the path
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envi import write_envi_raster
from .geo import GeoTransform, LVCSOrigin, RasterGrid, geodetic_from_lvcs
from .spectral import WORLDVIEW3_VNIR, MaterialRecord, SpectralCurve, resample_to_bands, write_spectrum_file

ORIGIN = LVCSOrigin(40.0, -77.0, 100.0)
SIZE = 64
GSD = 0.5
HALF = SIZE * GSD / 2

# name -> (class tags, reflectance knots at 400, 550, 700, 750, 900, 1040 nm)
MATERIALS = {
    "asphalt": (("road", "pavement"), (0.05, 0.06, 0.07, 0.075, 0.085, 0.09)),
    "concrete": (("pavement",), (0.22, 0.30, 0.33, 0.33, 0.32, 0.30)),
    "grass": (("vegetation", "grass"), (0.04, 0.12, 0.05, 0.35, 0.45, 0.42)),
    "oak_canopy": (("vegetation", "tree"), (0.02, 0.05, 0.02, 0.12, 0.40, 0.46)),
    "soil": (("soil",), (0.08, 0.14, 0.22, 0.25, 0.30, 0.34)),
    "roof_metal": (("roof", "metal"), (0.45, 0.42, 0.38, 0.37, 0.33, 0.30)),
    "roof_shingle": (("roof",), (0.06, 0.09, 0.20, 0.22, 0.24, 0.25)),
    "water": (("water",), (0.09, 0.07, 0.02, 0.01, 0.004, 0.002)),
}
KNOTS_NM = (400.0, 550.0, 700.0, 750.0, 900.0, 1040.0)

# true per-band distortion applied to the VNIR image
TRUE_GAIN = np.array([1.3, 0.8, 1.1, 0.9, 1.2, 0.7, 1.05, 1.5])
TRUE_OFFSET = np.array([0.02, -0.01, 0.0, 0.03, -0.02, 0.01, -0.03, 0.015])


def ground_z(x, y):
    """True bare-earth LVCS height."""
    return 0.02 * np.asarray(x) + 0.01 * np.asarray(y)


@dataclass
class FixtureTruth:
    flat_box: tuple = (-12.0, -5.0, 2.0, 9.0)          # xmin, xmax, ymin, ymax
    flat_height: float = 6.0
    gable_box: tuple = (4.0, 12.0, 2.0, 9.0)
    gable_eave: float = 5.0
    gable_ridge: float = 7.0
    road_y: float = -11.0
    path_x: float = 0.0
    trees: tuple = ((13.0, -3.0), (8.0, -4.0))
    tree_radius: float = 2.0
    tree_height: float = 4.0
    materials: dict = field(default_factory=dict)      # label image name map


@dataclass
class Fixture:
    root: Path
    config: Path
    dsm: Path
    vnir: Path
    library: Path
    vectors: Path
    truth: FixtureTruth
    labels: np.ndarray          # true material name index per pixel (order of MATERIALS)
    height: np.ndarray          # true DSM LVCS height per pixel


def _transform() -> GeoTransform:
    lat, lon, _ = geodetic_from_lvcs((-HALF, HALF, 0.0), ORIGIN)
    return GeoTransform(lon, lat, GSD, GSD, SIZE, SIZE)


def _curve(knots) -> SpectralCurve:
    w = np.arange(400.0, 1041.0, 10.0)
    return SpectralCurve(w, np.interp(w, KNOTS_NM, knots))


def scene_truth(t: FixtureTruth = None):
    """(labels, height) on the pixel-center grid."""
    t = t or FixtureTruth()
    names = list(MATERIALS)
    c = (np.arange(SIZE) + 0.5) * GSD - HALF
    x, y = np.meshgrid(c, -c)
    lab = np.full(x.shape, names.index("grass"))
    h = ground_z(x, y)

    def box(b):
        return (x >= b[0]) & (x < b[1]) & (y >= b[2]) & (y < b[3])

    lab[box((-16, -9, -2, 1))] = names.index("soil")
    lab[box((10, 16, 11, 16))] = names.index("water")
    lab[np.abs(y - t.road_y) < 4.0] = names.index("asphalt")
    lab[(np.abs(x - t.path_x) < 2.0) & (y > t.road_y)] = names.index("concrete")
    fb = box(t.flat_box)
    lab[fb] = names.index("roof_metal")
    h[fb] = ground_z(*(np.mean(t.flat_box[:2]), np.mean(t.flat_box[2:]))) + t.flat_height
    gb = box(t.gable_box)
    ridge_y = 0.5 * (t.gable_box[2] + t.gable_box[3])
    half_w = 0.5 * (t.gable_box[3] - t.gable_box[2])
    base = ground_z(np.mean(t.gable_box[:2]), ridge_y)
    roof = base + t.gable_ridge - (t.gable_ridge - t.gable_eave) * np.abs(y - ridge_y) / half_w
    lab[gb] = names.index("roof_shingle")
    h[gb] = roof[gb]
    for tx, ty in t.trees:
        r = np.hypot(x - tx, y - ty)
        inside = r < t.tree_radius
        lab[inside] = names.index("oak_canopy")
        h[inside] += t.tree_height * np.sqrt(1 - (r[inside] / t.tree_radius) ** 2) + 1.0
    return lab, h


def _vectors(t: FixtureTruth) -> dict:
    def ll(x, y):
        lat, lon, _ = geodetic_from_lvcs((x, y, 0.0), ORIGIN)
        return [lon, lat]

    def line(pts, **props):
        return {"type": "Feature", "properties": props,
                "geometry": {"type": "LineString", "coordinates": [ll(*p) for p in pts]}}

    return {"type": "FeatureCollection", "features": [
        line([(-HALF, t.road_y), (t.path_x, t.road_y), (HALF, t.road_y)], kind="road", lanes=2),
        line([(t.path_x, t.road_y), (t.path_x, HALF)], kind="path", lanes=1),
        line([(-14.0, -3.0), (-4.0, -3.0)], kind="parking", spot_spacing=2.5, side_offset=2.5),
    ]}


CONFIG = """\
seed = {seed}
out_dir = "out"
workers = 1

[inputs]
dsm = "dsm.hdr"
vnir = "vnir.hdr"
library = "library"
vectors = "roads.geojson"

[origin]
lat = {lat!r}
lon = {lon!r}
elev = {elev!r}

[calibrate]
targets = {{ road = "asphalt", path = "concrete" }}

[classify]
k = 12
stride = 2

[dtm]
tile_size = 8.0
iterations = 10

[buildings]
min_points = 75

[place]
car_assets = ["sedan"]
tree_assets = ["oak"]
tree_count = 6
min_separation = 2.0
tree_weights = {{ tree = 1.0 }}

[assemble]
remap = [ {{ source = "vegetation", context = "structure", target = "roof_shingle" }} ]

[assets.sedan]
mesh = "assets/sedan.obj"
variants = 3
radius = 2.5

[assets.oak]
mesh = "assets/oak.obj"
variants = 2
radius = 1.5
"""


def make_fixture(directory, seed: int = 0, noise: float = 0.005, dsm_noise: float = 0.02) -> Fixture:
    """Write the fixture into ``directory`` and return its paths and truth."""
    root = Path(directory)
    lib_dir = root / "library"
    lib_dir.mkdir(parents=True, exist_ok=True)
    truth = FixtureTruth()
    names = list(MATERIALS)
    truth.materials = {i: n for i, n in enumerate(names)}
    spectra = []
    for i, (name, (tags, knots)) in enumerate(MATERIALS.items()):
        rec = MaterialRecord(i, name, tags, _curve(knots))
        write_spectrum_file(rec, lib_dir / f"{i:02d}_{name}.txt")
        spectra.append(resample_to_bands(rec.curve, WORLDVIEW3_VNIR))
    spectra = np.array(spectra)

    gen = np.random.default_rng(seed)
    labels, height = scene_truth(truth)
    t = _transform()
    dsm = height + ORIGIN.elev + gen.normal(0.0, dsm_noise, height.shape)
    write_envi_raster(RasterGrid(t, dsm, None), root / "dsm.hdr", dtype="float64")
    refl = spectra[labels]                                   # (H, W, B)
    raw = (refl - TRUE_OFFSET) / TRUE_GAIN + gen.normal(0.0, noise, refl.shape)
    write_envi_raster(RasterGrid(t, raw.transpose(2, 0, 1), None), root / "vnir.hdr", dtype="float64",
                      band_names=list(WORLDVIEW3_VNIR.names))
    (root / "roads.geojson").write_text(json.dumps(_vectors(truth), indent=1) + "\n", encoding="utf-8")
    cfg = root / "config.toml"
    cfg.write_text(CONFIG.format(seed=seed, lat=ORIGIN.lat, lon=ORIGIN.lon, elev=ORIGIN.elev), encoding="utf-8")
    return Fixture(root, cfg, root / "dsm.hdr", root / "vnir.hdr", lib_dir, root / "roads.geojson",
                   truth, labels, height)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m scenesmith.fixtures", description=__doc__.splitlines()[0])
    p.add_argument("directory")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    fx = make_fixture(args.directory, args.seed)
    print(fx.config)
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())

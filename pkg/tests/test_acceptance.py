"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one PASS/FAIL line; the conftest hook prints them all
at the end of the session. Run this file directly with
``python3 tests/test_acceptance.py``.
"""

import filecmp
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from shapely.geometry import Polygon
from shapely.ops import unary_union

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import ACCEPTANCE, grid_at  # noqa: E402
from scenesmith.config import load_config  # noqa: E402
from scenesmith.envi import read_envi_raster, write_envi_raster  # noqa: E402
from scenesmith.fixtures import MATERIALS, _curve, make_fixture  # noqa: E402
from scenesmith.geo import LVCSOrigin  # noqa: E402
from scenesmith.materials import VNIRImage, build_material_catalog, map_from_labels, quantize_vnir  # noqa: E402
from scenesmith.mesh import TriangleMesh, read_obj, write_obj  # noqa: E402
from scenesmith.mixture import build_mixture_map, gaussian_kernel  # noqa: E402
from scenesmith.pipeline import run  # noqa: E402
from scenesmith.placement import (AssetCatalog, AssetEntry, DensityMap, ParkingRow, RoadEdge,  # noqa: E402
                                  RoadNetwork, place_by_density, place_cars_on_roads, place_parking)
from scenesmith.scene import validate_manifest, write_instance_list  # noqa: E402
from scenesmith.spectral import (WORLDVIEW3_VNIR, MaterialLibrary, MaterialRecord, SpectralCurve,  # noqa: E402
                                 fit_calibration, paired_spectral_angles, resample_to_bands)
from scenesmith.structures import BuildingParams, compute_edge_map, model_cluster  # noqa: E402
from scenesmith.structures.buildings import cluster_axis, cluster_cloud, find_building_clusters  # noqa: E402
from scenesmith.terrain import build_tile_grid, clamp_to_surface, smooth_corners  # noqa: E402

ORIGIN = LVCSOrigin(40.0, -77.0, 100.0)
CARS = AssetCatalog({"sedan": AssetEntry("sedan.obj", 3), "suv": AssetEntry("suv.obj", 2)})


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def library() -> MaterialLibrary:
    return MaterialLibrary([MaterialRecord(i, name, tags, _curve(knots))
                            for i, (name, (tags, knots)) in enumerate(MATERIALS.items())])


# --- 1 --------------------------------------------------------------------------

def test_01_sam():
    gen = np.random.default_rng(1)
    x = gen.uniform(0.0, 1.0, (10_000, 8)) + 1e-3
    r = gen.uniform(0.0, 1.0, (10_000, 8)) + 1e-3
    s = 10.0 ** gen.uniform(-3, 3, (10_000, 1))
    t0 = time.perf_counter()
    a = paired_spectral_angles(x, r)
    b = paired_spectral_angles(r, x)
    c = paired_spectral_angles(s * x, r)
    dt = time.perf_counter() - t0
    # independent route on a subset: arccos of the normalized dot product
    dot = np.einsum("ij,ij->i", x[:200], r[:200]) / (np.linalg.norm(x[:200], axis=1) * np.linalg.norm(r[:200], axis=1))
    oracle = float(np.max(np.abs(a[:200] - np.arccos(np.clip(dot, -1, 1)))))
    sym = float(np.max(np.abs(a - b)))
    scale = float(np.max(np.abs(a - c)))
    ok = sym <= 1e-12 and scale <= 1e-12 and oracle < 1e-7 and a.min() >= 0 and a.max() <= math.pi and dt < 1.0
    record(1, "SAM symmetry/scale invariance", ok,
           f"max |sym| {sym:.1e}, max |scale| {scale:.1e}, vs arccos {oracle:.1e}, range [{a.min():.3f}, {a.max():.3f}], {dt:.2f} s")
    assert ok


# --- 2 --------------------------------------------------------------------------

def synthetic_vnir(size=256, seed=2):
    """Patchwork of library materials with brightness variation and noise."""
    lib = library()
    refs = lib.resampled(WORLDVIEW3_VNIR)
    gen = np.random.default_rng(seed)
    patch = gen.integers(0, len(refs), (size // 16, size // 16))
    lab = np.repeat(np.repeat(patch, 16, 0), 16, 1)
    bright = gen.uniform(0.8, 1.2, (size, size, 1))
    cube = refs[lab] * bright + gen.normal(0, 0.005, (size, size, len(refs[0])))
    grid = grid_at(ORIGIN, np.moveaxis(np.clip(cube, 0, None), -1, 0), gsd=0.5)
    return VNIRImage(grid), lib


def test_02_quantization():
    image, lib = synthetic_vnir()
    t0 = time.perf_counter()
    clusters, cmap = quantize_vnir(image, k=50, subsample_stride=4, seed=7)
    catalog = build_material_catalog(clusters, lib)
    dt = time.perf_counter() - t0
    _, cmap2 = quantize_vnir(image, k=50, subsample_stride=4, seed=7)
    same = cmap.grid.samples.tobytes() == cmap2.grid.samples.tobytes()
    ok = catalog.n <= catalog.k == 50 and same and dt < 30.0
    record(2, "quantization n <= k, deterministic", ok,
           f"k {catalog.k}, n {catalog.n}, bit-identical rerun {same}, {dt:.2f} s")
    assert ok


# --- 3 --------------------------------------------------------------------------

def test_03_calibration_recovery():
    refs = library().resampled(WORLDVIEW3_VNIR)
    worst_g = worst_o = 0.0
    for trial in range(20):
        gen = np.random.default_rng(300 + trial)
        gain = gen.uniform(0.5, 2.0, refs.shape[1])
        offset = gen.uniform(-0.05, 0.05, refs.shape[1])
        ref = np.repeat(refs, 250, axis=0)
        observed = gain * ref + offset + gen.normal(0, 0.01, ref.shape)
        adj = fit_calibration(observed, ref)
        # the fit maps observed -> reference; invert it to get the distortion
        g_hat = 1.0 / adj.gain
        o_hat = -adj.offset / adj.gain
        worst_g = max(worst_g, float(np.max(np.abs(g_hat / gain - 1))))
        worst_o = max(worst_o, float(np.max(np.abs(o_hat - offset))))
    ok = worst_g < 0.05 and worst_o < 0.01
    record(3, "calibration recovery", ok, f"max gain rel err {worst_g:.4f}, max offset err {worst_o:.4f} (20 trials)")
    assert ok


# --- 4 --------------------------------------------------------------------------

def test_04_dtm():
    tile, n, gsd = 16.0, 20, 1.0
    size = int(tile * n / gsd)
    gen = np.random.default_rng(4)
    c = (np.arange(size) + 0.5) * gsd
    x, y = np.meshgrid(c, size * gsd - c)
    truth = 100.0 + math.tan(math.radians(3.0)) * x
    dsm = truth + gen.normal(0, 0.05, x.shape)
    for _ in range(15):
        w, h = gen.integers(4, 14, 2)
        r0, c0 = gen.integers(0, size - h), gen.integers(0, size - w)
        dsm[r0:r0 + h, c0:c0 + w] = np.max(truth[r0:r0 + h, c0:c0 + w]) + gen.uniform(10, 20)
    grid = grid_at(ORIGIN, dsm, gsd)
    t0 = time.perf_counter()
    tiles = smooth_corners(build_tile_grid(grid, ORIGIN, tile, 1.0), 10)
    tiles = clamp_to_surface(tiles, grid, ORIGIN)
    dt = time.perf_counter() - t0
    dtm = tiles.elevation_at(x, y)
    err = float(np.max(np.abs(dtm - truth)))
    above = float(np.max(dtm - dsm))
    ok = tiles.shape == (n, n) and err < 1.0 and above <= 0.0 and dt < 10.0
    record(4, "DTM extraction", ok, f"{n}x{n} tiles, max |DTM - truth| {err:.3f} m, "
           f"max (DTM - DSM) {above:.2e} m, {dt:.2f} s")
    assert ok


# --- 5 --------------------------------------------------------------------------

def building_scene(gsd=0.3, size=70.0, angle=math.radians(20.0), seed=5):
    """Ground at 0 with one flat and one gable building, both rotated by ``angle``."""
    gen = np.random.default_rng(seed)
    npx = int(size / gsd)
    c = (np.arange(npx) + 0.5) * gsd
    x, y = np.meshgrid(c, size - c)
    ca, sa = math.cos(angle), math.sin(angle)
    specs = []
    h = np.zeros(x.shape)
    # flat: 12 x 8 m, 6 m high
    cx, cy, hw, hh = 20.0, 22.0, 6.0, 4.0
    u, v = ca * (x - cx) + sa * (y - cy), -sa * (x - cx) + ca * (y - cy)
    inside = (np.abs(u) < hw) & (np.abs(v) < hh)
    h[inside] = 6.0
    specs.append((cx, cy, hw, hh, [np.array([0.0, 0.0, 1.0])]))
    # gable: 14 x 10 m, eave 5 m, ridge 8 m along the local u axis
    cx, cy, hw, hh, eave, ridge = 46.0, 46.0, 7.0, 5.0, 5.0, 8.0
    u, v = ca * (x - cx) + sa * (y - cy), -sa * (x - cx) + ca * (y - cy)
    inside = (np.abs(u) < hw) & (np.abs(v) < hh)
    h[inside] = (ridge - (ridge - eave) * np.abs(v) / hh)[inside]
    pitch = math.atan((ridge - eave) / hh)
    n_loc = [np.array([0.0, -math.sin(pitch), math.cos(pitch)]), np.array([0.0, math.sin(pitch), math.cos(pitch)])]
    rot = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1]])
    specs.append((cx, cy, hw, hh, [rot @ nn for nn in n_loc]))
    dsm = ORIGIN.elev + h + gen.normal(0, 0.05, h.shape)
    footprints = []
    for cx, cy, hw, hh, normals in specs:
        loc = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
        footprints.append((Polygon(loc @ np.array([[ca, sa], [-sa, ca]]) + [cx, cy]), normals))
    return grid_at(ORIGIN, dsm, gsd), footprints


def test_05_building_recovery():
    dsm, truth = building_scene()
    tiles = clamp_to_surface(smooth_corners(build_tile_grid(dsm, ORIGIN, 35.0, 1.0), 10), dsm, ORIGIN)
    params = BuildingParams()
    clusters = find_building_clusters(dsm, tiles, ORIGIN, None, params.min_height, params.min_cluster_pixels)
    edges = compute_edge_map(dsm)
    extent = dsm.transform.extent(ORIGIN)
    worst_angle, worst_iou, worst_t, priors_ok, matched = 0.0, 1.0, 0.0, True, 0
    for i, px in enumerate(clusters):
        t0 = time.perf_counter()
        res = model_cluster(cluster_cloud(dsm, ORIGIN, px), i, 11, params, tiles, ORIGIN, extent,
                            cluster_axis(edges, dsm.shape, px))
        worst_t = max(worst_t, time.perf_counter() - t0)
        if not res.regions:
            worst_iou = 0.0
            continue
        found = unary_union([Polygon(r.boundary) for r in res.regions])
        fp, normals = max(truth, key=lambda t: t[0].intersection(found).area)
        matched += 1
        worst_iou = min(worst_iou, fp.intersection(found).area / fp.union(found).area)
        for r in res.regions:
            n = r.plane.normal
            worst_angle = max(worst_angle, min(math.degrees(math.acos(min(1.0, abs(float(n @ m))))) for m in normals))
            priors_ok &= r.plane.satisfies(params.priors) and r.plane.rms <= params.priors.epsilon
    ok = len(clusters) == 2 and matched == 2 and worst_angle < 2.0 and worst_iou >= 0.85 and priors_ok \
        and worst_t < 30.0
    record(5, "building recovery", ok, f"{len(clusters)} clusters, worst normal err {worst_angle:.2f} deg, "
           f"worst IoU {worst_iou:.3f}, priors ok {priors_ok}, slowest cluster {worst_t:.2f} s")
    assert ok


# --- 6 --------------------------------------------------------------------------

def test_06_mixture():
    from test_mixture import explicit_blur

    recs = [MaterialRecord(i, f"m{i}", (), SpectralCurve(np.array([400.0, 1040.0]), np.full(2, 0.1 * (i + 1))))
            for i in range(5)]
    gen = np.random.default_rng(6)
    worst_sum = 0.0
    for trial in range(20):
        lab = gen.integers(0, 5, tuple(gen.integers(3, 30, 2)))
        lab.flat[:5] = np.arange(5)
        for factor, sigma in ((1, 0.7), (2, 1.5), (3, 2.5)):
            m = build_mixture_map(map_from_labels(grid_at(ORIGIN, np.zeros(lab.shape)), lab, recs), factor, sigma)
            worst_sum = max(worst_sum, float(np.max(np.abs(m.grid.samples.sum(axis=0) - 1))))
    lab = gen.integers(0, 5, (12, 9))
    lab.flat[:5] = np.arange(5)
    m = build_mixture_map(map_from_labels(grid_at(ORIGIN, np.zeros(lab.shape)), lab, recs), 2, 0.0)
    up = np.repeat(np.repeat(lab, 2, 0), 2, 1)
    one_hot = all(np.array_equal(m.grid.samples[i], (up == i).astype(float)) for i in range(5))
    half = np.zeros((16, 16), dtype=int)
    half[:, 8:] = 1
    m = build_mixture_map(map_from_labels(grid_at(ORIGIN, np.zeros(half.shape)), half, recs[:2]), 2, 1.5)
    upc = np.repeat(np.repeat(half, 2, 0), 2, 1)
    oracle = np.array([explicit_blur((upc == i).astype(float), 1.5) for i in range(2)])
    oracle /= oracle.sum(axis=0)
    seam = 0.5 * (m.grid.samples[:, 16, 15] + m.grid.samples[:, 16, 16])
    seam_oracle = 0.5 * (oracle[:, 16, 15] + oracle[:, 16, 16])
    seam_err = float(max(np.max(np.abs(seam - 0.5)), np.max(np.abs(seam - seam_oracle))))
    ok = worst_sum <= 1e-6 and one_hot and seam_err <= 1e-6
    record(6, "mixture map", ok, f"max |sum - 1| {worst_sum:.1e}, sigma 0 one-hot {one_hot}, "
           f"seam err {seam_err:.1e}")
    assert ok


# --- 7 --------------------------------------------------------------------------

def test_07_placement_geometry():
    gen = np.random.default_rng(7)
    worst_off = worst_par = 0.0
    right_ok, cars = True, 0
    for e in range(1000):
        a = gen.uniform(-500, 500, 2)
        ang = gen.uniform(-math.pi, math.pi)
        b = a + gen.uniform(10, 200) * np.array([math.cos(ang), math.sin(ang)])
        net = RoadNetwork(np.array([[*a, 0.0], [*b, 0.0]]), [RoadEdge(0, 1, 2, "road")])
        v = (b - a) / np.linalg.norm(b - a)
        for rec in place_cars_on_roads(net, CARS, 4.0, 10.0, 0.5, seed=e):
            p = np.array(rec.position[:2]) - a
            along = float(p @ v)
            side = float(v[0] * p[1] - v[1] * p[0])     # > 0 left of a->b
            worst_off = max(worst_off, abs(abs(side) - 2.0))
            h = np.array([math.cos(rec.heading), math.sin(rec.heading)])
            forward = float(h @ v) > 0
            worst_par = max(worst_par, abs(math.asin(max(-1.0, min(1.0, v[0] * h[1] - v[1] * h[0])))))
            # right of travel: forward cars sit right of a->b, reverse cars left of it
            right_ok &= (side < 0) if forward else (side > 0)
            right_ok &= 0 <= along <= np.linalg.norm(b - a)
            cars += 1
    ok = cars > 0 and worst_off <= 0.01 and worst_par <= 1e-6 and right_ok
    record(7, "placement geometry", ok, f"{cars} cars on 1000 edges, max offset err {worst_off:.1e} m, "
           f"max heading err {worst_par:.1e} rad, right side {right_ok}")
    assert ok


# --- 8 --------------------------------------------------------------------------

def test_08_parking_occupancy():
    rows = [ParkingRow((0.0, 10.0 * i, 0.0), (250.0, 10.0 * i, 0.0), 2.5, 2.5) for i in range(100)]
    spots = sum(int(math.floor(r.length / r.spot_spacing + 1e-9)) for r in rows)
    a = place_parking(rows, CARS, 0.7, seed=8)
    b = place_parking(rows, CARS, 0.7, seed=8)
    frac = len(a) / spots
    ok = spots == 10_000 and 0.69 <= frac <= 0.71 and a == b
    record(8, "parking occupancy", ok, f"{len(a)} of {spots} spots ({frac:.4f}), reproducible {a == b}")
    assert ok


# --- 9 --------------------------------------------------------------------------

def test_09_throughput(tmp_path):
    # 43 edges of 100 m plus one of 80 m: 438 slots, both directions at p = 1 -> 876 cars
    nodes, edges = [], []
    for i in range(44):
        length = 100.0 if i < 43 else 80.0
        nodes += [[0.0, 20.0 * i, 0.0], [length, 20.0 * i, 0.0]]
        edges.append(RoadEdge(2 * i, 2 * i + 1, 2, "road"))
    net = RoadNetwork(np.array(nodes), edges)
    # 32 rows of 100 spots plus one of 22 -> 3 222 spots, all filled
    rows = [ParkingRow((0.0, -10.0 * i, 0.0), (250.0 if i < 32 else 55.0, -10.0 * i, 0.0), 2.5, 2.5)
            for i in range(33)]
    gen = np.random.default_rng(9)
    dens = grid_at(ORIGIN, gen.random((500, 500)), gsd=2.0)
    trees = AssetCatalog({"oak": AssetEntry("oak.obj", 2), "pine": AssetEntry("pine.obj", 2)})
    t0 = time.perf_counter()
    cars = place_cars_on_roads(net, CARS, 4.0, 10.0, 1.0, seed=9)
    parked = place_parking(rows, CARS, 1.0, seed=9)
    planted = place_by_density(DensityMap(dens), trees, 36_149, 3.0, seed=9, origin=ORIGIN)
    t_place = time.perf_counter() - t0
    write_instance_list(cars + parked + planted, tmp_path / "all.txt")
    dt = time.perf_counter() - t0
    counts = (len(planted), len(cars), len(parked))
    total = sum(counts)
    ok = counts == (36_149, 876, 3_222) and total == 40_247 and dt < 60.0
    record(9, "throughput", ok, f"{counts[0]} trees + {counts[1]} road cars + {counts[2]} parked = {total}, "
           f"placed in {t_place:.2f} s, written in {dt - t_place:.2f} s")
    assert ok


# --- 10 -------------------------------------------------------------------------

def test_10_round_trips(tmp_path, e2e):
    gen = np.random.default_rng(10)
    mesh = TriangleMesh(gen.uniform(-1e3, 1e3, (200, 3)), gen.random((200, 2)), gen.integers(0, 200, (300, 3)))
    write_obj(mesh, tmp_path / "m.obj")
    back = read_obj(tmp_path / "m.obj")
    obj_err = float(np.max(np.abs(back.vertices - mesh.vertices)))
    uv_err = float(np.max(np.abs(back.uvs - mesh.uvs)))
    obj_ok = obj_err <= 1e-9 and uv_err <= 1e-9 and np.array_equal(back.triangles, mesh.triangles)
    envi_ok = True
    for dtype, values in (("float32", gen.normal(0, 100, (3, 7, 5)).astype(np.float32)),
                          ("float64", gen.normal(0, 100, (3, 7, 5))),
                          ("uint16", gen.integers(0, 65536, (3, 7, 5))),
                          ("uint8", gen.integers(0, 256, (3, 7, 5)))):
        for interleave in ("bsq", "bil", "bip"):
            for order in (0, 1):
                g = grid_at(ORIGIN, values.astype(float), gsd=0.5)
                write_envi_raster(g, tmp_path / "r.hdr", dtype=dtype, interleave=interleave, byte_order=order)
                r = read_envi_raster(tmp_path / "r.hdr")
                envi_ok &= r.samples.shape == g.samples.shape and np.array_equal(r.samples, g.samples) \
                    and r.transform == g.transform
    fx, report = e2e
    manifest = load_config(fx.config).out_dir / "assemble" / "scene.json"
    try:
        m = validate_manifest(manifest)
        manifest_ok, detail = True, f"{len(m['meshes'])} meshes, {len(m['instances'])} instance lists"
    except Exception as exc:  # report, then fail below
        manifest_ok, detail = False, str(exc)
    ok = obj_ok and envi_ok and manifest_ok
    record(10, "format round-trips", ok, f"OBJ max err {max(obj_err, uv_err):.1e}, ENVI 24 cases bit-exact {envi_ok}, "
           f"manifest valid {manifest_ok} ({detail})")
    assert ok


# --- 11 -------------------------------------------------------------------------

def _tree_diff(a: Path, b: Path) -> list[str]:
    cmp = filecmp.dircmp(a, b, ignore=["run_report.json"])
    out = [str(Path(cmp.left) / n) for n in cmp.left_only + cmp.right_only + cmp.funny_files]
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    out += [str(a / n) for n in mismatch + errors]
    for sub in cmp.common_dirs:
        out += _tree_diff(a / sub, b / sub)
    return out


def test_11_end_to_end_determinism(tmp_path):
    outs = []
    for run_id in ("a", "b"):
        fx = make_fixture(tmp_path / run_id)
        cfg = load_config(fx.config, {"out_dir": tmp_path / run_id / "out"})
        run(cfg, "all", use_cache=False)
        outs.append(tmp_path / run_id / "out")
    files = sum(1 for p in outs[0].rglob("*") if p.is_file())
    diff = _tree_diff(*outs)
    ok = not diff and files > 0
    record(11, "end-to-end determinism", ok, f"{files} files compared, {len(diff)} differ"
           + (f" (first: {diff[0]})" if diff else ""))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider",
                          "-W", "ignore::pytest.PytestAssertRewriteWarning"]))

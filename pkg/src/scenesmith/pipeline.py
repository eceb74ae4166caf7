"""Staged pipeline: calibrate, classify, dtm, buildings, place, assemble.

Every stage writes into ``out_dir/<stage>/`` and records a ``stage.json``
holding a content key (SHA-256 over its parameters, the seed, input file
digests and the keys of the stages it depends on) plus object counts. A
stage whose key is unchanged is skipped. Wall-clock data goes only into
``out_dir/run_report.json``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import PipelineConfig
from .envi import read_envi_raster, write_envi_raster
from .geo import GeoTransform, RasterGrid, geodetic_from_lvcs
from .materials import (RemapTable, VNIRImage, apply_remap, build_material_catalog,
                        class_to_material_map, quantize_vnir, read_palette, write_palette)
from .materials import MaterialMap
from .mesh import write_obj
from .mixture import build_mixture_map
from .placement import (AssetCatalog, AssetEntry, density_map_from_materials, load_vectors,
                        place_by_density, place_cars_on_roads, place_parking)
from .scene import (MaterialDatabase, assemble_scene, build_decal_meshes, write_instance_list,
                    write_material_database)
from .spectral import WORLDVIEW3_VNIR, fit_calibration, load_library, resample_to_bands
from .structures.buildings import (BuildingParams, cluster_axis, cluster_cloud, find_building_clusters,
                                   model_cluster)
from .structures.edges import compute_edge_map
from .structures.ransac import RansacPriors
from .terrain import build_tile_grid, clamp_to_surface, read_tile_grid, smooth_corners, triangulate_dtm, write_tile_grid

log = logging.getLogger(__name__)

STAGES = ("calibrate", "classify", "dtm", "buildings", "place", "assemble")
PREREQS = {
    "calibrate": (),
    "classify": ("calibrate",),
    "dtm": ("classify",),
    "buildings": ("classify", "dtm"),
    "place": ("classify", "dtm"),
    "assemble": ("calibrate", "classify", "dtm", "buildings", "place"),
}
# parameter blocks each stage's cache key depends on
_KEY_BLOCKS = {
    "calibrate": ("calibrate", "assemble"),
    "classify": ("classify",),
    "dtm": ("dtm",),
    "buildings": ("buildings",),
    "place": ("place",),
    "assemble": ("assemble",),
}
PIPELINE_VERSION = "1"


class PrerequisiteError(RuntimeError):
    pass


class DataError(RuntimeError):
    pass


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Context:
    """Lazily loaded inputs shared by the stages of one run."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.origin = cfg.origin
        self.bands = WORLDVIEW3_VNIR
        self._cache = {}

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def library(self):
        return self._get("library", lambda: load_library(self.cfg.library))

    @property
    def dsm(self) -> RasterGrid:
        def load():
            g = read_envi_raster(self.cfg.dsm)
            if g.bands != 1:
                raise DataError(f"DSM has {g.bands} bands, expected 1")
            return g
        return self._get("dsm", load)

    @property
    def vnir(self) -> RasterGrid:
        def load():
            g = read_envi_raster(self.cfg.vnir)
            if g.bands != len(self.bands):
                raise DataError(f"VNIR has {g.bands} bands, expected {len(self.bands)}")
            return g
        return self._get("vnir", load)

    @property
    def vectors(self):
        def load():
            if self.cfg.vectors is None:
                return None, []
            return load_vectors(self.cfg.vectors, self.origin)
        return self._get("vectors", load)

    def input_digests(self) -> dict:
        def compute():
            out = {}
            for p in self.cfg.input_files():
                try:
                    rel = p.relative_to(self.cfg.path.parent).as_posix()
                except ValueError:
                    rel = p.name
                out[rel] = file_digest(p)
            return out
        return self._get("digests", compute)

    def tiles(self):
        return self._get("tiles", lambda: read_tile_grid(self.stage_dir("dtm") / "tiles.json"))

    def material_map(self, stage="classify", name="materialmap") -> MaterialMap:
        d = self.stage_dir(stage)
        grid = read_envi_raster(d / f"{name}.hdr")
        return MaterialMap(grid, read_palette(d / f"{name}_palette.txt", self.library))

    def elevation(self) -> Callable:
        tiles = self.tiles()
        elev = self.origin.elev
        return lambda x, y: tiles.elevation_at(x, y) - elev


# --- helpers --------------------------------------------------------------------

def resample_nearest(values: np.ndarray, src: GeoTransform, dst: GeoTransform, origin) -> np.ndarray:
    """Look up ``values`` (on ``src``) at every ``dst`` pixel center, nearest pixel."""
    xs, ys = dst.pixel_centers(origin)
    gx, gy = np.meshgrid(xs, ys)
    r, c = src.world_to_pixel(gx, gy, origin)
    return values[r, c]


def _segment_distance(px, py, a, b) -> np.ndarray:
    d = b - a
    t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / float(d @ d), 0.0, 1.0)
    return np.hypot(px - (a[0] + t * d[0]), py - (a[1] + t * d[1]))


def _corner_grid(tiles, origin) -> RasterGrid:
    """Tile corners as a raster for inspection (corner = pixel center)."""
    cx, cy = tiles.corner_x, tiles.corner_y
    sx = float(cx[1] - cx[0]) if len(cx) > 1 else tiles.tile_size
    sy = float(cy[0] - cy[1]) if len(cy) > 1 else tiles.tile_size
    lat, lon, _ = geodetic_from_lvcs((cx[0] - sx / 2, cy[0] + sy / 2, 0.0), origin)
    t = GeoTransform(lon, lat, sx, sy, len(cx), len(cy))
    return RasterGrid(t, tiles.corners, None)


def _json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- stages ---------------------------------------------------------------------

def stage_calibrate(ctx: Context) -> dict:
    cfg = ctx.cfg
    p = cfg.block("calibrate")
    lane_width = cfg.block("assemble")["lane_width"]
    vnir = ctx.vnir
    valid = vnir.valid_mask()
    samples, refs = [], []
    network, _ = ctx.vectors
    if p["enabled"] and network is not None and network.edges:
        xs, ys = vnir.transform.pixel_centers(ctx.origin)
        gx, gy = np.meshgrid(xs, ys)
        bands = {}
        for kind, material in sorted(p["targets"].items()):
            try:
                rec = ctx.library.find(material)
            except KeyError:
                raise DataError(f"calibration reference {material!r} not in the library") from None
            near = np.zeros(valid.shape, dtype=bool)
            for e in network.edges:
                if e.kind != kind:
                    continue
                a, b = network.nodes[e.a, :2], network.nodes[e.b, :2]
                near |= _segment_distance(gx, gy, a, b) <= 0.5 * e.lanes * lane_width
            bands[kind] = (near & valid, resample_to_bands(rec.curve, ctx.bands))
        # pixels inside the footprint of more than one kind are ambiguous
        claims = sum(m.astype(int) for m, _ in bands.values())
        for kind, (near, ref) in bands.items():
            near = near & (claims == 1)
            if near.any():
                samples.append(vnir.samples[:, near].T)
                refs.append(np.broadcast_to(ref, (int(near.sum()), len(ref))))
    n = int(sum(len(s) for s in samples))
    out = vnir.samples.copy()
    if n >= 2:
        adj = fit_calibration(np.vstack(samples), np.vstack(refs))
        out[:, valid] = adj.apply(vnir.samples[:, valid].T).T
        gain, offset = adj.gain.tolist(), adj.offset.tolist()
    else:
        gain, offset = [1.0] * len(ctx.bands), [0.0] * len(ctx.bands)
    d = ctx.stage_dir("calibrate")
    write_envi_raster(vnir.with_samples(out), d / "vnir.hdr", dtype="float64",
                      band_names=list(ctx.bands.names))
    _json(d / "adjustment.json", {"gain": gain, "offset": offset, "samples": n})
    return {"calibration_samples": n}


def stage_classify(ctx: Context) -> dict:
    p = ctx.cfg.block("classify")
    d = ctx.stage_dir("classify")
    grid = read_envi_raster(ctx.stage_dir("calibrate") / "vnir.hdr")
    clusters, classmap = quantize_vnir(VNIRImage(grid, ctx.bands), p["k"], p["stride"], ctx.cfg.seed)
    catalog = build_material_catalog(clusters, ctx.library, ctx.bands)
    mmap = class_to_material_map(classmap, catalog)
    labels = mmap.labels()
    tags = {t.lower() for t in p["mask_tags"]}
    masked = np.array([any(t.lower() in tags for t in r.class_tags) for r in mmap.palette] + [False])
    mask = masked[np.where(labels >= 0, labels, len(mmap.palette))]
    write_envi_raster(classmap.grid, d / "classmap.hdr", dtype="uint16")
    write_envi_raster(mmap.grid, d / "materialmap.hdr", dtype="uint16")
    write_palette(mmap.palette, d / "materialmap_palette.txt")
    write_envi_raster(RasterGrid(grid.transform, mask.astype(np.float64), None), d / "mask.hdr", dtype="uint8")
    _json(d / "catalog.json", {
        "cluster_materials": catalog.material_ids.tolist(),
        "unique_materials": catalog.unique_materials,
        "angles": catalog.angles.tolist(),
        "inertia_history": clusters.inertia_history,
        "iterations": clusters.iterations,
    })
    return {"clusters": clusters.k, "materials": catalog.n, "masked_pixels": int(mask.sum())}


def _mask_on_dsm(ctx: Context) -> np.ndarray:
    mask = read_envi_raster(ctx.stage_dir("classify") / "mask.hdr")
    return resample_nearest(mask.samples[0], mask.transform, ctx.dsm.transform, ctx.origin)


def stage_dtm(ctx: Context) -> dict:
    p = ctx.cfg.block("dtm")
    d = ctx.stage_dir("dtm")
    mask = _mask_on_dsm(ctx)
    tiles = build_tile_grid(ctx.dsm, ctx.origin, p["tile_size"], p["bin_width"], mask)
    tiles = smooth_corners(tiles, p["iterations"], p["outlier_threshold"])
    tiles = clamp_to_surface(tiles, ctx.dsm, ctx.origin, mask)
    write_tile_grid(tiles, d / "tiles.json")
    write_envi_raster(_corner_grid(tiles, ctx.origin), d / "corners.hdr", dtype="float64")
    mesh = triangulate_dtm(tiles, ctx.origin, ctx.vnir.transform)
    write_obj(mesh, d / "terrain.obj")
    ctx._cache.pop("tiles", None)
    return {"tiles": int(tiles.ground.size), "vertices": len(mesh.vertices), "triangles": len(mesh.triangles)}


def _model_task(args):
    return model_cluster(*args)


def stage_buildings(ctx: Context) -> dict:
    p = ctx.cfg.block("buildings")
    d = ctx.stage_dir("buildings")
    dsm = ctx.dsm
    tiles = ctx.tiles()
    priors = RansacPriors(p["max_slope"], p["min_points"], p["epsilon"], p["bitmap_epsilon"])
    params = BuildingParams(priors, p["alpha"], p["min_area"], None, p["angle_tolerance"], p["min_height"],
                            p["min_points"], p["snap"])
    clusters = find_building_clusters(dsm, tiles, ctx.origin, _mask_on_dsm(ctx), p["min_height"], p["min_points"])
    edges = compute_edge_map(dsm, p["canny_low"], p["canny_high"])
    extent = ctx.vnir.transform.extent(ctx.origin)
    tasks = [(cluster_cloud(dsm, ctx.origin, px), i, ctx.cfg.seed, params, tiles, ctx.origin, extent,
              cluster_axis(edges, dsm.shape, px)) for i, px in enumerate(clusters)]
    if ctx.cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=ctx.cfg.workers) as ex:
            results = list(ex.map(_model_task, tasks))
    else:
        results = [_model_task(t) for t in tasks]

    struct = np.zeros(dsm.shape)
    for px in clusters:
        struct[px[:, 0], px[:, 1]] = 1.0
    vt = ctx.vnir.transform
    struct_v = resample_nearest(struct, dsm.transform, vt, ctx.origin)
    write_envi_raster(RasterGrid(vt, struct_v, None), d / "structure_mask.hdr", dtype="uint8")
    lines = []
    planes = set()
    n_mesh = 0
    for res in results:
        for mesh, rec in zip(res.meshes, res.records):
            write_obj(mesh, d / f"{mesh.name}.obj")
            rec = dict(rec, mesh=f"{mesh.name}.obj")
            lines.append(json.dumps(rec, sort_keys=True))
            planes.add((rec["cluster"], rec["plane"]))
            n_mesh += 1
    (d / "buildings.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return {"clusters": len(clusters), "planes": len(planes), "buildings": n_mesh}


def _catalog(ctx: Context, ids) -> AssetCatalog:
    return AssetCatalog({a: AssetEntry(ctx.cfg.assets[a].mesh, ctx.cfg.assets[a].variants,
                                       ctx.cfg.assets[a].radius) for a in ids})


def stage_place(ctx: Context) -> dict:
    p = ctx.cfg.block("place")
    d = ctx.stage_dir("place")
    seed = ctx.cfg.seed
    elevation = ctx.elevation()
    network, rows = ctx.vectors
    cars, parked, trees = [], [], []
    if network is not None and p["car_assets"]:
        catalog = _catalog(ctx, p["car_assets"])
        cars = place_cars_on_roads(network, catalog, p["lane_offset"], p["min_interval"],
                                   p["road_occupancy"], seed, elevation)
        parked = place_parking(rows, catalog, p["parking_occupancy"], seed, elevation)
    if p["tree_count"] > 0:
        density = density_map_from_materials(ctx.material_map(), p["tree_weights"])
        if float(density.grid.samples.sum()) > 0:
            trees = place_by_density(density, _catalog(ctx, p["tree_assets"]), p["tree_count"],
                                     p["min_separation"], tuple(p["scale_range"]), seed, ctx.origin, elevation)
        else:
            log.warning("tree density map is all zero; no trees placed")
    write_instance_list(cars, d / "roads.txt")
    write_instance_list(parked, d / "parking.txt")
    write_instance_list(trees, d / "trees.txt")
    return {"road_cars": len(cars), "parked_cars": len(parked), "trees": len(trees),
            "objects_placed": len(cars) + len(parked) + len(trees)}


def _remap_table(ctx: Context, rules) -> RemapTable:
    out = []
    for r in rules:
        try:
            src = r["source"]
            target = ctx.library.find(r["target"]).id
        except KeyError as exc:
            raise DataError(f"bad remap rule {r!r}: {exc}") from None
        out.append((src, r.get("context", "any"), target))
    return RemapTable(out)


def stage_assemble(ctx: Context) -> dict:
    p = ctx.cfg.block("assemble")
    d = ctx.stage_dir("assemble")
    lib = ctx.library
    struct = read_envi_raster(ctx.stage_dir("buildings") / "structure_mask.hdr")
    mmap = apply_remap(ctx.material_map(), _remap_table(ctx, p["remap"]), lib, struct)
    mixture = build_mixture_map(mmap, p["upsample"], p["sigma"])

    decal_ids = {}
    extra = []
    for kind, key in (("road", p["road_material"]), ("path", p["path_material"])):
        try:
            rec = lib.find(key)
        except KeyError:
            raise DataError(f"decal material {key!r} not in the library") from None
        decal_ids[kind] = rec.id
        extra.append(rec)
    db = MaterialDatabase.from_records(mmap.palette, extra)
    mat_path = write_material_database(db, d / "materials")
    names = db.unique_names()
    write_envi_raster(mmap.grid, d / "materialmap.hdr", dtype="uint16")
    write_palette(mmap.palette, d / "materialmap_palette.txt")
    write_envi_raster(mixture.grid, d / "mixture.hdr", dtype="float32", band_names=names[:mmap.n])

    meshes_dir = d / "meshes"
    meshes_dir.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(ctx.stage_dir("dtm") / "terrain.obj", meshes_dir / "terrain.obj")
    buildings = []
    for line in (ctx.stage_dir("buildings") / "buildings.jsonl").read_text(encoding="utf-8").splitlines():
        name = json.loads(line)["mesh"]
        shutil.copyfile(ctx.stage_dir("buildings") / name, meshes_dir / name)
        buildings.append(meshes_dir / name)
    decals = []
    network, _ = ctx.vectors
    if network is not None:
        mats = {k: db.index_of(v) for k, v in decal_ids.items()}
        for mesh in build_decal_meshes(network, p["lane_width"], mats, ctx.elevation()):
            path = meshes_dir / f"{mesh.name}.obj"
            write_obj(mesh, path)
            decals.append((path, mesh.material_id))

    inst_dir = d / "instances"
    inst_dir.mkdir(parents=True, exist_ok=True)
    instances = {}
    used_assets = set()
    for cat in ("roads", "parking", "trees"):
        src = ctx.stage_dir("place") / f"{cat}.txt"
        shutil.copyfile(src, inst_dir / f"{cat}.txt")
        recs = [ln for ln in src.read_text(encoding="ascii").splitlines() if ln.strip()]
        used_assets.update(ln.split()[0] for ln in recs)
        instances[cat] = (inst_dir / f"{cat}.txt", len(recs))
    assets = {a: (s.mesh, s.variants) for a, s in ctx.cfg.assets.items()}
    manifest = assemble_scene(
        d, ctx.origin, ctx.bands, mat_path, len(db), meshes_dir / "terrain.obj", buildings, decals,
        instances, {"material_map": d / "materialmap.hdr", "mixture_map": d / "mixture.hdr",
                    "palette": d / "materialmap_palette.txt"}, assets)
    return {"materials": len(db), "mixture_bands": mmap.n, "meshes": 1 + len(buildings) + len(decals),
            "instances": sum(n for _, n in instances.values()), "manifest": manifest.name}


STAGE_FUNCS = {
    "calibrate": stage_calibrate,
    "classify": stage_classify,
    "dtm": stage_dtm,
    "buildings": stage_buildings,
    "place": stage_place,
    "assemble": stage_assemble,
}


# --- driver ---------------------------------------------------------------------

def _read_stage_record(ctx: Context, stage: str) -> Optional[dict]:
    path = ctx.stage_dir(stage) / "stage.json"
    if not path.is_file():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None


def stage_key(ctx: Context, stage: str) -> str:
    prereq_keys = {}
    for p in PREREQS[stage]:
        rec = _read_stage_record(ctx, p)
        if rec is None:
            raise PrerequisiteError(f"stage '{stage}' needs the output of '{p}'; run --stage {p} first")
        prereq_keys[p] = rec["key"]
    payload = {
        "version": PIPELINE_VERSION,
        "stage": stage,
        "seed": ctx.cfg.seed,
        "params": {b: ctx.cfg.block(b) for b in _KEY_BLOCKS[stage]},
        "origin": [ctx.origin.lat, ctx.origin.lon, ctx.origin.elev],
        "inputs": ctx.input_digests(),
        "assets": {a: [s.mesh, s.variants, s.radius] for a, s in sorted(ctx.cfg.assets.items())},
        "prereqs": prereq_keys,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def _outputs(d: Path) -> list[str]:
    return sorted(p.relative_to(d).as_posix() for p in d.rglob("*") if p.is_file() and p.name != "stage.json")


def run_stage(ctx: Context, stage: str, use_cache: bool = True) -> dict:
    key = stage_key(ctx, stage)
    d = ctx.stage_dir(stage)
    rec = _read_stage_record(ctx, stage)
    if use_cache and rec is not None and rec.get("key") == key \
            and all((d / f).is_file() for f in rec.get("outputs", [])):
        return {"stage": stage, "status": "cached", "counts": rec.get("counts", {}), "seconds": 0.0}
    if d.exists():
        shutil.rmtree(d)
    d.mkdir(parents=True)
    t0 = time.perf_counter()
    counts = STAGE_FUNCS[stage](ctx)
    seconds = time.perf_counter() - t0
    _json(d / "stage.json", {"stage": stage, "key": key, "counts": counts, "outputs": _outputs(d)})
    return {"stage": stage, "status": "ran", "counts": counts, "seconds": seconds}


def run(cfg: PipelineConfig, stage: str, use_cache: bool = True) -> dict:
    """Run one stage (or ``all``) and write ``run_report.json``. Returns the report."""
    if stage != "all" and stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    ctx = Context(cfg)
    ctx.out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    entries = []
    for s in (STAGES if stage == "all" else (stage,)):
        log.info("stage %s", s)
        entries.append(run_stage(ctx, s, use_cache))
    counts = {}
    for e in entries:
        for k, v in e["counts"].items():
            counts[f"{e['stage']}.{k}"] = v
    report = {
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "seed": cfg.seed,
        "workers": cfg.workers,
        "stages": entries,
        "counts": counts,
        "total_seconds": math.fsum(e["seconds"] for e in entries),
    }
    _json(ctx.out / "run_report.json", report)
    return report


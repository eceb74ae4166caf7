"""Pipeline configuration (TOML).

Relative paths resolve against the config file's directory. Validation
collects every problem before raising, so one run reports them all.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .geo import DomainError, LVCSOrigin


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


DEFAULTS: dict[str, dict[str, Any]] = {
    "calibrate": {
        "enabled": True,
        "targets": {"road": "asphalt"},      # edge kind -> reference material (name, tag or id)
    },
    "classify": {
        "k": 50,
        "stride": 4,
        "mask_tags": ["vegetation", "water"],
    },
    "dtm": {
        "tile_size": 32.0,
        "bin_width": 1.0,
        "iterations": 10,
        "outlier_threshold": 1.0,
    },
    "buildings": {
        "max_slope": 50.0,
        "min_points": 75,
        "epsilon": 0.35,
        "bitmap_epsilon": 0.35,
        "alpha": 5.0,
        "min_area": 7.0,
        "min_height": 2.5,
        "angle_tolerance": 15.0,
        "snap": True,
        "canny_low": 0.1,
        "canny_high": 0.2,
    },
    "place": {
        "lane_offset": 4.0,
        "min_interval": 10.0,
        "road_occupancy": 0.15,
        "parking_occupancy": 0.7,
        "tree_count": 0,
        "min_separation": 3.0,
        "scale_range": [0.8, 1.2],
        "tree_weights": {},
        "car_assets": [],
        "tree_assets": [],
    },
    "assemble": {
        "upsample": 2,
        "sigma": 1.5,
        "lane_width": 4.0,
        "road_material": "asphalt",
        "path_material": "concrete",
        "remap": [],
    },
}

STAGE_BLOCKS = tuple(DEFAULTS)


@dataclass
class AssetSpec:
    mesh: str
    variants: int = 1
    radius: float = 1.0


@dataclass
class PipelineConfig:
    path: Path
    dsm: Path
    vnir: Path
    library: Path
    vectors: Optional[Path]
    origin: LVCSOrigin
    seed: int
    out_dir: Path
    workers: int = 1
    params: dict = field(default_factory=dict)
    assets: dict = field(default_factory=dict)

    def block(self, name: str) -> dict:
        return self.params[name]

    def input_files(self) -> list[Path]:
        files = [self.dsm, self.dsm.with_suffix(".img"), self.vnir, self.vnir.with_suffix(".img")]
        files += sorted(self.library.glob("*.txt"))
        if self.vectors is not None:
            files.append(self.vectors)
        return files


def _merge(defaults: dict, given: dict, block: str, problems: list) -> dict:
    out = {}
    for k, v in defaults.items():
        out[k] = given.get(k, v)
    for k in given:
        if k not in defaults:
            problems.append(f"[{block}] unknown key {k!r}")
    return out


def _num(block: dict, key: str, name: str, problems: list, lo=None, hi=None, integer=False, strict_lo=False):
    v = block.get(key)
    ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok_type:
        problems.append(f"[{name}] {key} must be {'an integer' if integer else 'a number'}")
        return
    if lo is not None and (v <= lo if strict_lo else v < lo):
        problems.append(f"[{name}] {key} must be {'>' if strict_lo else '>='} {lo}")
    if hi is not None and v > hi:
        problems.append(f"[{name}] {key} must be <= {hi}")


def load_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read and validate a config file; ``overrides`` (seed, out_dir, workers) win over it."""
    path = Path(path)
    problems: list[str] = []
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError([f"cannot parse {path}: {exc}"]) from None
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    base = path.resolve().parent

    def resolve(p) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    known_top = {"seed", "out_dir", "workers", "inputs", "origin", "assets", *STAGE_BLOCKS}
    for k in raw:
        if k not in known_top:
            problems.append(f"unknown top-level key {k!r}")

    inputs = raw.get("inputs", {})
    paths = {}
    for key, kind in (("dsm", "file"), ("vnir", "file"), ("library", "dir"), ("vectors", "file")):
        v = inputs.get(key)
        if v is None:
            if key != "vectors":
                problems.append(f"[inputs] {key} is required")
            paths[key] = None
            continue
        p = resolve(v)
        if kind == "file" and not p.is_file():
            problems.append(f"[inputs] {key}: file not found: {p}")
        if kind == "dir" and not p.is_dir():
            problems.append(f"[inputs] {key}: directory not found: {p}")
        if kind == "file" and key in ("dsm", "vnir") and p.suffix == ".hdr" and not p.with_suffix(".img").is_file():
            problems.append(f"[inputs] {key}: data file not found: {p.with_suffix('.img')}")
        paths[key] = p

    origin = None
    o = raw.get("origin")
    if not isinstance(o, dict) or "lat" not in o or "lon" not in o:
        problems.append("[origin] lat and lon are required")
    else:
        try:
            origin = LVCSOrigin(float(o["lat"]), float(o["lon"]), float(o.get("elev", 0.0)))
        except (DomainError, TypeError, ValueError) as exc:
            problems.append(f"[origin] {exc}")

    seed = overrides.get("seed", raw.get("seed"))
    if seed is None:
        problems.append("seed is required")
    elif isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        problems.append("seed must be a non-negative integer")

    out_dir = overrides.get("out_dir")
    out_dir = Path(out_dir) if out_dir is not None else resolve(raw.get("out_dir", "out"))
    workers = overrides.get("workers", raw.get("workers", 1))
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        problems.append("workers must be an integer >= 1")

    params = {}
    for name, defaults in DEFAULTS.items():
        given = raw.get(name, {})
        if not isinstance(given, dict):
            problems.append(f"[{name}] must be a table")
            given = {}
        params[name] = _merge(defaults, given, name, problems)
    c, d, b, pl, a = (params[n] for n in ("classify", "dtm", "buildings", "place", "assemble"))
    _num(c, "k", "classify", problems, lo=1, integer=True)
    _num(c, "stride", "classify", problems, lo=1, integer=True)
    _num(d, "tile_size", "dtm", problems, lo=0, strict_lo=True)
    _num(d, "bin_width", "dtm", problems, lo=0, strict_lo=True)
    _num(d, "iterations", "dtm", problems, lo=0, integer=True)
    _num(d, "outlier_threshold", "dtm", problems, lo=0)
    _num(b, "max_slope", "buildings", problems, lo=0, hi=90, strict_lo=True)
    _num(b, "min_points", "buildings", problems, lo=3, integer=True)
    for key in ("epsilon", "bitmap_epsilon", "alpha", "angle_tolerance"):
        _num(b, key, "buildings", problems, lo=0, strict_lo=True)
    for key in ("min_area", "min_height"):
        _num(b, key, "buildings", problems, lo=0)
    for key in ("canny_low", "canny_high"):
        _num(b, key, "buildings", problems, lo=0, hi=1)
    if isinstance(b.get("canny_low"), (int, float)) and isinstance(b.get("canny_high"), (int, float)) \
            and b["canny_high"] < b["canny_low"]:
        problems.append("[buildings] canny_high must be >= canny_low")
    _num(pl, "lane_offset", "place", problems, lo=0)
    _num(pl, "min_interval", "place", problems, lo=0, strict_lo=True)
    for key in ("road_occupancy", "parking_occupancy"):
        _num(pl, key, "place", problems, lo=0, hi=1)
    _num(pl, "tree_count", "place", problems, lo=0, integer=True)
    _num(pl, "min_separation", "place", problems, lo=0)
    sr = pl.get("scale_range")
    if not (isinstance(sr, list) and len(sr) == 2 and all(isinstance(s, (int, float)) for s in sr)
            and 0 < sr[0] <= sr[1]):
        problems.append("[place] scale_range must be [lo, hi] with 0 < lo <= hi")
    _num(a, "upsample", "assemble", problems, lo=1, integer=True)
    _num(a, "sigma", "assemble", problems, lo=0)
    _num(a, "lane_width", "assemble", problems, lo=0, strict_lo=True)

    assets = {}
    for aid, spec in (raw.get("assets") or {}).items():
        if not isinstance(spec, dict) or "mesh" not in spec:
            problems.append(f"[assets.{aid}] mesh is required")
            continue
        variants = spec.get("variants", 1)
        if isinstance(variants, bool) or not isinstance(variants, int) or variants < 1:
            problems.append(f"[assets.{aid}] variants must be an integer >= 1")
            continue
        assets[aid] = AssetSpec(str(spec["mesh"]), variants, float(spec.get("radius", 1.0)))
    for key in ("car_assets", "tree_assets"):
        for aid in pl.get(key, []):
            if aid not in assets:
                problems.append(f"[place] {key} names unknown asset {aid!r}")
    has_vectors = paths.get("vectors") is not None
    if pl.get("tree_count", 0) and not pl.get("tree_assets"):
        problems.append("[place] tree_count > 0 needs tree_assets")
    if has_vectors and not pl.get("car_assets"):
        problems.append("[place] a vector file needs car_assets")

    if problems:
        raise ConfigError(problems)
    return PipelineConfig(path.resolve(), paths["dsm"], paths["vnir"], paths["library"], paths["vectors"],
                          origin, int(seed), out_dir, int(workers), params, assets)

"""Scene bundle output: decals, material database, instance lists, manifest.

The manifest is a JSON file with sorted keys and paths relative to its own
directory. Every writer here is byte-deterministic: equal inputs give equal
files, and nothing time-dependent is written.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .envi import read_band_names
from .geo import LVCSOrigin
from .mesh import DecalMesh
from .placement import PlacementRecord, RoadNetwork
from .spectral import BandSet, MaterialRecord, SpectralCurve, format_reflectance, read_reflectance

MANIFEST_FORMAT = "scenesmith-scene"
MANIFEST_VERSION = 1


class ManifestError(ValueError):
    """Manifest refers to something missing or inconsistent."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# --- decals -------------------------------------------------------------------------

def build_decal_meshes(network: RoadNetwork, lane_width: float = 4.0,
                       materials: Optional[Mapping[str, int]] = None,
                       elevation=None, lift: float = 0.01) -> list[DecalMesh]:
    """One flat quad per network edge, ``lanes * lane_width`` wide.

    The quad is centered on the segment and lies at the terrain elevation of
    the segment midpoint (``elevation(x, y)``, else the node height) plus
    ``lift``. ``materials`` maps edge kind to a material id.
    """
    if not lane_width > 0:
        raise ValueError("lane_width must be positive")
    materials = dict(materials or {})
    out = []
    for ei, e in enumerate(network.edges):
        a = network.nodes[e.a]
        b = network.nodes[e.b]
        v = network.direction(e)
        left = np.array([-v[1], v[0]])
        hw = 0.5 * e.lanes * lane_width
        mid = 0.5 * (a + b)
        z = float(np.asarray(elevation(np.array([mid[0]]), np.array([mid[1]]))).ravel()[0]) \
            if elevation is not None else float(mid[2])
        z += lift
        xy = np.array([a[:2] + hw * left, a[:2] - hw * left, b[:2] - hw * left, b[:2] + hw * left])
        verts = np.column_stack([xy, np.full(4, z)])
        uvs = np.array([[0.0, 1.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        tris = np.array([[0, 1, 2], [0, 2, 3]])
        out.append(DecalMesh(verts, uvs, tris, name=f"decal_{ei:04d}_{e.kind}",
                             material_id=int(materials.get(e.kind, -1)), edge_index=ei))
    return out


# --- material database ----------------------------------------------------------------

@dataclass(frozen=True)
class MaterialEntry:
    index: int
    name: str
    curve: SpectralCurve
    tags: tuple[str, ...] = ()
    library_id: Optional[int] = None


@dataclass
class MaterialDatabase:
    entries: list[MaterialEntry]

    def __post_init__(self):
        if [e.index for e in self.entries] != list(range(len(self.entries))):
            raise ValueError("material indices must be dense 0..n-1 in order")

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_records(cls, records: Sequence[MaterialRecord], extra: Sequence[MaterialRecord] = ()) -> "MaterialDatabase":
        """Entries follow ``records`` (the mixture band order); ``extra`` ones not
        already present are appended."""
        seen = set()
        entries = []
        for r in list(records) + list(extra):
            if r.id in seen:
                continue
            seen.add(r.id)
            entries.append(MaterialEntry(len(entries), r.name, r.curve, tuple(r.class_tags), r.id))
        return cls(entries)

    def index_of(self, library_id: int) -> int:
        for e in self.entries:
            if e.library_id == library_id:
                return e.index
        raise KeyError(library_id)

    def unique_names(self) -> list[str]:
        """Entry names, with ``_<index>`` appended to any name used more than once."""
        names = [e.name for e in self.entries]
        dup = {n for n in names if names.count(n) > 1}
        return [f"{n}_{i}" if n in dup else n for i, n in enumerate(names)]


def _slug(name: str) -> str:
    s = re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_").lower()
    return s or "material"


def write_material_database(db: MaterialDatabase, out_dir, mat_name: str = "materials.mat") -> Path:
    """Write one two-column reflectance file per entry and the ``.mat`` index.

    ``.mat`` lines are ``index<TAB>name<TAB>reflectance path<TAB>tags`` with
    tags comma-separated and the path relative to ``out_dir``.
    """
    out_dir = Path(out_dir)
    (out_dir / "reflectance").mkdir(parents=True, exist_ok=True)
    lines = ["# index\tname\treflectance\ttags"]
    for e, name in zip(db.entries, db.unique_names()):
        rel = f"reflectance/{e.index:03d}_{_slug(name)}.txt"
        (out_dir / rel).write_text(format_reflectance(e.curve), encoding="utf-8")
        lines.append(f"{e.index}\t{name}\t{rel}\t{','.join(e.tags)}")
    path = out_dir / mat_name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_material_database(mat_path) -> MaterialDatabase:
    mat_path = Path(mat_path)
    entries = []
    for line in mat_path.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        idx, name, rel, tags = (line.split("\t") + [""])[:4]
        curve = read_reflectance(mat_path.parent / rel)
        entries.append(MaterialEntry(int(idx), name, curve, tuple(t for t in tags.split(",") if t)))
    return MaterialDatabase(entries)


# --- instance lists -------------------------------------------------------------------

def _g9(v: float) -> str:
    s = f"{float(v):.9g}"
    return "0" if s == "-0" else s


def format_instance(r: PlacementRecord) -> str:
    x, y, z = r.position
    return f"{r.asset_id} {_g9(x)} {_g9(y)} {_g9(z)} {_g9(r.heading)} {_g9(r.scale)} {int(r.material_variant)}"


def write_instance_list(instances: Sequence[PlacementRecord], path) -> None:
    """``asset_id x y z heading scale variant`` per line, 9 significant digits.

    Records are stably sorted by asset id, so within an asset the
    generation order (edge, slot, direction) is kept.
    """
    ordered = sorted(instances, key=lambda r: r.asset_id)
    text = "".join(format_instance(r) + "\n" for r in ordered)
    Path(path).write_text(text, encoding="ascii")


def read_instance_list(path) -> list[PlacementRecord]:
    out = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        if not line.strip():
            continue
        aid, x, y, z, h, s, v = line.split()
        heading = min(max(float(h), -math.pi), math.pi)
        out.append(PlacementRecord(aid, (float(x), float(y), float(z)), heading, float(s), int(v)))
    return out


# --- manifest -------------------------------------------------------------------------

def _rel(path, root: Path) -> str:
    return Path(path).resolve().relative_to(root.resolve()).as_posix()


def assemble_scene(out_dir, origin: LVCSOrigin, bands: BandSet, material_db_path, n_materials: int,
                   terrain, buildings=(), decals=(), instances=None, maps=None, assets=None,
                   manifest_name: str = "scene.json") -> Path:
    """Write the scene manifest and validate it.

    ``terrain`` is an OBJ path; ``buildings`` OBJ paths; ``decals`` pairs
    (OBJ path, material index); ``instances`` maps a category to
    ``(instance list path, count)``; ``maps`` maps a role (``material_map``,
    ``mixture_map``, ``palette``) to a file; ``assets`` maps asset id to
    ``(mesh reference, variant count)``. All paths must lie under
    ``out_dir``; they are stored relative to it.
    """
    root = Path(out_dir)
    meshes = [{"kind": "terrain", "path": _rel(terrain, root), "material": "mixture_map"}]
    meshes += [{"kind": "building", "path": _rel(p, root), "material": "mixture_map"} for p in buildings]
    meshes += [{"kind": "decal", "path": _rel(p, root), "material": int(m)} for p, m in decals]
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "origin": {"lat": origin.lat, "lon": origin.lon, "elev": origin.elev},
        "bands": {"names": list(bands.names), "edges_nm": [list(b) for b in bands.bands]},
        "material_database": {"path": _rel(material_db_path, root), "count": int(n_materials)},
        "meshes": meshes,
        "instances": [{"category": c, "path": _rel(p, root), "count": int(n)}
                      for c, (p, n) in sorted((instances or {}).items())],
        "maps": {k: _rel(v, root) for k, v in sorted((maps or {}).items())},
        "assets": {a: {"mesh": m, "variants": int(v)} for a, (m, v) in sorted((assets or {}).items())},
    }
    path = root / manifest_name
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    validate_manifest(path)
    return path


def validate_manifest(path) -> dict:
    """Check every reference in a manifest; raise :class:`ManifestError` listing all problems."""
    path = Path(path)
    root = path.parent
    m = json.loads(path.read_text(encoding="utf-8"))
    problems = []

    def need(rel, what):
        if not (root / rel).is_file():
            problems.append(f"missing {what}: {rel}")
            return False
        return True

    if m.get("format") != MANIFEST_FORMAT:
        problems.append("not a scene manifest")
    db = m.get("material_database", {})
    n = int(db.get("count", 0))
    names = None
    if need(db.get("path", ""), "material database"):
        try:
            mdb = read_material_database(root / db["path"])
            names = mdb.unique_names()
            if len(mdb) != n:
                problems.append(f"material database has {len(mdb)} entries, manifest says {n}")
        except (OSError, ValueError) as exc:
            problems.append(f"unreadable material database: {exc}")
    for mesh in m.get("meshes", []):
        need(mesh["path"], f"{mesh['kind']} mesh")
        mat = mesh.get("material")
        if isinstance(mat, int) and not 0 <= mat < n:
            problems.append(f"material index {mat} of {mesh['path']} outside 0..{n - 1}")
    assets = m.get("assets", {})
    for inst in m.get("instances", []):
        if need(inst["path"], f"{inst['category']} instance list"):
            recs = (root / inst["path"]).read_text(encoding="ascii").splitlines()
            recs = [r for r in recs if r.strip()]
            if len(recs) != inst["count"]:
                problems.append(f"{inst['path']} has {len(recs)} records, manifest says {inst['count']}")
            for r in recs:
                parts = r.split()
                aid, var = parts[0], int(parts[-1])
                if aid not in assets:
                    problems.append(f"unknown asset {aid!r} in {inst['path']}")
                    break
                if not 0 <= var < assets[aid]["variants"]:
                    problems.append(f"variant {var} of {aid!r} out of range in {inst['path']}")
                    break
    for role, rel in m.get("maps", {}).items():
        if need(rel, role) and role == "mixture_map" and names is not None:
            bands = read_band_names(root / rel)
            expect = [x.replace(",", " ").strip() for x in names[:len(bands)]]
            if bands and (len(bands) > len(names) or bands != expect):
                problems.append("mixture map band order differs from the material database")
    if problems:
        raise ManifestError(problems)
    return m

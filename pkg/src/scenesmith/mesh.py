"""Triangle meshes and Wavefront OBJ I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


@dataclass
class TriangleMesh:
    vertices: np.ndarray                 # (V, 3) LVCS meters
    uvs: np.ndarray                      # (V, 2) in [0, 1]
    triangles: np.ndarray                # (T, 3) vertex indices, CCW seen from outside
    name: str = "mesh"

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.uvs) != len(self.vertices):
            raise ValueError("need one UV per vertex")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise IndexError("triangle index out of range")

    @classmethod
    def empty(cls, name: str = "mesh") -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 2)), np.zeros((0, 3), dtype=np.int64), name)

    def face_normals(self) -> np.ndarray:
        """Unit normals (right-hand rule); degenerate faces give zeros."""
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        ln = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, ln, out=np.zeros_like(n), where=ln > 0)

    def face_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


@dataclass
class BuildingMesh(TriangleMesh):
    source_region: Optional[int] = None
    n_roof: int = 0                       # first n_roof triangles are roof, the rest walls
    wall_pairs: list = field(default_factory=list)   # boundary edge (i, j) per wall quad


@dataclass
class DecalMesh(TriangleMesh):
    material_id: int = -1
    edge_index: int = -1


def _fmt(x: float) -> str:
    s = format(float(x), ".17g")
    return "0" if s == "-0" else s


def write_obj(mesh: TriangleMesh, path, comment: Optional[str] = None) -> None:
    """ASCII OBJ with ``v``, ``vt`` and ``f a/a b/b c/c`` records (1-based).

    Coordinates are written with 17 significant digits so a re-read returns
    the exact float64 values. Output depends only on the mesh.
    """
    lines = [f"# {comment or mesh.name}", f"o {mesh.name}"]
    lines += [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices]
    lines += [f"vt {_fmt(u)} {_fmt(v)}" for u, v in mesh.uvs]
    lines += [f"f {a}/{a} {b}/{b} {c}/{c}" for a, b, c in (mesh.triangles + 1)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_obj(path) -> TriangleMesh:
    """Read the triangle subset of OBJ written by :func:`write_obj`.

    Faces must be triangles; ``v/vt`` pairs must agree (the writer never
    splits them).
    """
    verts, uvs, tris = [], [], []
    name = "mesh"
    for raw in Path(path).read_text(encoding="ascii").splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            verts.append([float(p) for p in parts[1:4]])
        elif tag == "vt":
            uvs.append([float(p) for p in parts[1:3]])
        elif tag == "o":
            name = parts[1] if len(parts) > 1 else name
        elif tag == "f":
            if len(parts) != 4:
                raise ValueError(f"non-triangular face: {raw!r}")
            idx = []
            for p in parts[1:]:
                fields = p.split("/")
                vi = int(fields[0])
                if len(fields) > 1 and fields[1] and int(fields[1]) != vi:
                    raise ValueError(f"v/vt index mismatch in {raw!r}")
                idx.append(vi - 1)
            tris.append(idx)
    if not uvs:
        uvs = [[0.0, 0.0]] * len(verts)
    return TriangleMesh(np.array(verts).reshape(-1, 3), np.array(uvs).reshape(-1, 2),
                        np.array(tris, dtype=np.int64).reshape(-1, 3), name)

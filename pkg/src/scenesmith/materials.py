"""VNIR quantization, material catalogs, material maps and remapping."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .geo import RasterGrid
from .kmeans import ClusterSet, assign, kmeans
from .spectral import BandSet, MaterialLibrary, MaterialRecord, WORLDVIEW3_VNIR, match_material

# Index rasters (class and material maps) are written as uint16, so their
# nodata sentinel has to fit in that range.
INDEX_NODATA = 65535.0

CONTEXTS = ("terrain", "structure", "any")


@dataclass
class VNIRImage:
    grid: RasterGrid
    bands: BandSet = WORLDVIEW3_VNIR

    def __post_init__(self):
        if self.grid.bands != len(self.bands):
            raise ValueError(f"image has {self.grid.bands} bands, band set has {len(self.bands)}")

    def pixels(self) -> tuple[np.ndarray, np.ndarray]:
        """Valid pixel spectra in raster order, and the validity mask."""
        valid = self.grid.valid_mask()
        return self.grid.samples[:, valid].T, valid


@dataclass
class ClassMap:
    grid: RasterGrid
    k: int


@dataclass
class MaterialMap:
    """Per-pixel index into ``palette`` (the unique material set)."""

    grid: RasterGrid
    palette: list[MaterialRecord]

    @property
    def n(self) -> int:
        return len(self.palette)

    def labels(self) -> np.ndarray:
        """Integer label image; nodata pixels are -1."""
        a = self.grid.samples[0]
        out = np.where(a == self.grid.nodata, -1, a)
        return out.astype(np.int64)


@dataclass
class MaterialCatalog:
    material_ids: np.ndarray        # per cluster, library id
    unique_materials: list[int]     # first-occurrence order
    remap: np.ndarray               # cluster index -> unique index
    records: list[MaterialRecord]   # parallel to unique_materials
    angles: np.ndarray              # SAM angle of each cluster match

    @property
    def k(self) -> int:
        return len(self.material_ids)

    @property
    def n(self) -> int:
        return len(self.unique_materials)


def quantize_vnir(image: VNIRImage, k: int = 50, subsample_stride: int = 4, seed: int = 0):
    """Vector-quantize image spectra with k-means++ in band space.

    Centers are fit on every ``subsample_stride``-th valid pixel (raster
    order); then every valid pixel is assigned to its nearest center.
    Returns ``(ClusterSet, ClassMap)``.
    """
    if subsample_stride < 1:
        raise ValueError("subsample_stride must be >= 1")
    pix, valid = image.pixels()
    if len(pix) == 0:
        raise ValueError("image has no valid pixels")
    clusters, _ = kmeans(pix[::subsample_stride], k, seed)
    labels, _ = assign(pix, clusters.centers)
    out = np.full(valid.shape, INDEX_NODATA)
    out[valid] = labels
    return clusters, ClassMap(RasterGrid(image.grid.transform, out, INDEX_NODATA), k)


def build_material_catalog(clusters: ClusterSet, library: MaterialLibrary,
                           bands: BandSet = WORLDVIEW3_VNIR) -> MaterialCatalog:
    """Match every cluster center to the library and dedupe the matches."""
    ids, angles = [], []
    for c in clusters.centers:
        mid, ang = match_material(c, library, bands)
        ids.append(mid)
        angles.append(ang)
    unique: list[int] = []
    remap = np.empty(len(ids), dtype=np.int64)
    for j, mid in enumerate(ids):
        if mid not in unique:
            unique.append(mid)
        remap[j] = unique.index(mid)
    assert len(unique) <= len(ids)
    return MaterialCatalog(np.array(ids, dtype=np.int64), unique, remap,
                           [library.get(m) for m in unique], np.array(angles))


def class_to_material_map(classmap: ClassMap, catalog: MaterialCatalog) -> MaterialMap:
    if classmap.k != catalog.k:
        raise ValueError(f"class map has k={classmap.k}, catalog has {catalog.k} clusters")
    a = classmap.grid.samples[0]
    valid = a != classmap.grid.nodata
    idx = a[valid].astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= catalog.k):
        raise IndexError("class index outside [0, k)")
    out = np.full(a.shape, INDEX_NODATA)
    out[valid] = catalog.remap[idx]
    return MaterialMap(RasterGrid(classmap.grid.transform, out, INDEX_NODATA), list(catalog.records))


def map_from_labels(grid_like: RasterGrid, labels: np.ndarray, palette: Sequence[MaterialRecord]) -> MaterialMap:
    """Build a material map from an integer label image (-1 = nodata)."""
    out = np.where(labels < 0, INDEX_NODATA, labels).astype(np.float64)
    return MaterialMap(RasterGrid(grid_like.transform, out, INDEX_NODATA), list(palette))


# --- remapping ------------------------------------------------------------------

Source = Union[int, str]


@dataclass
class RemapTable:
    """Rules ``(source, context, target id)``.

    ``source`` is a library material id (int) or a class tag (str);
    ``context`` is ``terrain``, ``structure`` or ``any``.
    """

    rules: list[tuple[Source, str, int]]

    def __post_init__(self):
        seen = set()
        for src, ctx, _ in self.rules:
            if ctx not in CONTEXTS:
                raise ValueError(f"unknown remap context {ctx!r}")
            key = (src.lower() if isinstance(src, str) else int(src), ctx)
            if key in seen:
                raise ValueError(f"duplicate remap rule for {key}")
            seen.add(key)
        self._lookup = {((s.lower() if isinstance(s, str) else int(s)), c): int(t) for s, c, t in self.rules}

    def target(self, record: MaterialRecord, context: str) -> Optional[int]:
        """Most specific matching target: id beats tag, exact context beats ``any``."""
        for key in ((record.id, context), (record.id, "any")):
            if key in self._lookup:
                return self._lookup[key]
        for tag in record.class_tags:
            for key in ((tag.lower(), context), (tag.lower(), "any")):
                if key in self._lookup:
                    return self._lookup[key]
        return None


def apply_remap(mmap: MaterialMap, table: RemapTable, library: MaterialLibrary,
                context_mask: RasterGrid | np.ndarray | None = None) -> MaterialMap:
    """Remap pixel materials by (material, context); unmatched pixels pass through.

    Nonzero ``context_mask`` pixels are in structure context, others in
    terrain context. The palette is rebuilt to contain only materials that
    still occur: surviving entries keep their relative order and new targets
    are appended by ascending library id.
    """
    labels = mmap.labels()
    if context_mask is None:
        structure = np.zeros(labels.shape, dtype=bool)
    else:
        m = context_mask.samples[0] if isinstance(context_mask, RasterGrid) else np.asarray(context_mask)
        if m.shape != labels.shape:
            raise ValueError("context mask does not match the material map")
        structure = m != 0

    new_ids = np.full(labels.shape, -1, dtype=np.int64)
    for i, rec in enumerate(mmap.palette):
        at = labels == i
        if not at.any():
            continue
        for ctx, where in (("terrain", at & ~structure), ("structure", at & structure)):
            tgt = table.target(rec, ctx)
            new_ids[where] = rec.id if tgt is None else tgt

    order: list[int] = []
    present = set(np.unique(new_ids[new_ids >= 0]).tolist())
    for rec in mmap.palette:
        if rec.id in present and rec.id not in order:
            order.append(rec.id)
    for mid in sorted(present - set(order)):
        order.append(mid)
    index = {mid: i for i, mid in enumerate(order)}
    out = np.full(labels.shape, -1, dtype=np.int64)
    for mid, i in index.items():
        out[new_ids == mid] = i
    return map_from_labels(mmap.grid, out, [library.get(m) for m in order])


# --- persistence ----------------------------------------------------------------

def write_palette(palette: Sequence[MaterialRecord], path) -> None:
    """ASCII sidecar: ``index<TAB>library id<TAB>name`` per line."""
    Path(path).write_text("".join(f"{i}\t{r.id}\t{r.name}\n" for i, r in enumerate(palette)), encoding="utf-8")


def read_palette(path, library: MaterialLibrary) -> list[MaterialRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            _, mid, _ = line.split("\t", 2)
            out.append(library.get(int(mid)))
    return out

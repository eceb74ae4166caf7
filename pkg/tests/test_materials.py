import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import grid_at
from scenesmith.kmeans import assign, kmeans
from scenesmith.materials import (INDEX_NODATA, ClassMap, MaterialCatalog, RemapTable, VNIRImage,
                                  apply_remap, build_material_catalog, class_to_material_map,
                                  map_from_labels, quantize_vnir, read_palette, write_palette)
from scenesmith.spectral import (WORLDVIEW3_VNIR, MaterialLibrary, MaterialRecord, SpectralCurve,
                                 resample_to_bands)

W = np.linspace(400, 1040, 65)


def library(n=6, seed=0):
    gen = np.random.default_rng(seed)
    names = ["asphalt", "grass", "roof shingle", "moroccan pine", "soil", "water", "brick", "sand"]
    tags = [("road",), ("vegetation", "grass"), ("roof",), ("vegetation", "tree"), ("soil",), ("water",),
            ("roof",), ("soil",)]
    return MaterialLibrary([MaterialRecord(i, names[i], tags[i], SpectralCurve(W, gen.uniform(0.05, 0.9, 65)))
                            for i in range(n)])


def image(origin, cube):
    return VNIRImage(grid_at(origin, cube, nodata=None))


def test_single_color_k1(origin):
    cube = np.broadcast_to(np.linspace(0.1, 0.8, 8)[:, None, None], (8, 5, 5)).copy()
    clusters, cm = quantize_vnir(image(origin, cube), k=1, subsample_stride=1)
    assert np.allclose(clusters.centers[0], cube[:, 0, 0])
    assert np.all(cm.grid.samples == 0)


def test_two_colors_exact_centers():
    a, b = np.full(8, 0.2), np.full(8, 0.7)
    x = np.array([a, b, a, b])
    clusters, labels = kmeans(x, 2, seed=5)
    # brute force: best 2-partition of 4 points
    best = None
    for mask in itertools.product([0, 1], repeat=4):
        m = np.array(mask)
        if m.min() == m.max():
            continue
        c = [x[m == j].mean(axis=0) for j in (0, 1)]
        cost = sum(((x[m == j] - c[j]) ** 2).sum() for j in (0, 1))
        if best is None or cost < best[0]:
            best = (cost, c)
    got = sorted(map(tuple, clusters.centers))
    assert np.allclose(got, sorted(map(tuple, best[1])), atol=0)


def test_quantize_deterministic(origin):
    gen = np.random.default_rng(1)
    img = image(origin, gen.random((8, 20, 20)))
    _, a = quantize_vnir(img, 7, 2, seed=3)
    _, b = quantize_vnir(img, 7, 2, seed=3)
    assert a.grid.samples.tobytes() == b.grid.samples.tobytes()


def test_kmeans_inertia_nonincreasing():
    x = np.random.default_rng(2).random((500, 3))
    c, _ = kmeans(x, 6, 0)
    h = np.array(c.inertia_history)
    assert np.all(np.diff(h) <= 1e-9 * h[0])


def test_kmeans_k_too_large():
    with pytest.raises(ValueError):
        kmeans(np.ones((5, 3)), 2, 0)


def test_assign_ties_lowest_index():
    lab, _ = assign(np.zeros((1, 2)), np.array([[1.0, 0], [-1.0, 0]]))
    assert lab[0] == 0


@given(st.integers(1, 12), st.integers(0, 2**31))
def test_unique_count_bounded(k, seed):
    lib = library(6)
    gen = np.random.default_rng(seed)
    centers = gen.uniform(0.01, 1, (k, 8))
    from scenesmith.kmeans import ClusterSet
    cat = build_material_catalog(ClusterSet(centers, seed), lib)
    assert 1 <= cat.n <= k
    assert np.array_equal(np.array(cat.unique_materials)[cat.remap], cat.material_ids)


def test_identical_centers_one_material():
    from scenesmith.kmeans import ClusterSet
    cat = build_material_catalog(ClusterSet(np.tile(np.linspace(.1, .5, 8), (4, 1)), 0), library())
    assert cat.n == 1


def test_centers_from_library_identity_remap():
    from scenesmith.kmeans import ClusterSet
    lib = library(6)
    cat = build_material_catalog(ClusterSet(lib.resampled(WORLDVIEW3_VNIR).copy(), 0), lib)
    assert cat.n == 6 and np.array_equal(cat.remap, np.arange(6))


def _catalog(remap, ids):
    lib = library(8)
    uniq = []
    for i in ids:
        if i not in uniq:
            uniq.append(i)
    return MaterialCatalog(np.array(ids), uniq, np.array(remap), [lib.get(i) for i in uniq], np.zeros(len(ids)))


def test_identity_and_collapsing_class_maps(origin):
    cm = ClassMap(grid_at(origin, np.array([[0, 1], [1, 0]]), nodata=INDEX_NODATA), 2)
    ident = class_to_material_map(cm, _catalog([0, 1], [3, 5]))
    assert np.array_equal(ident.labels(), [[0, 1], [1, 0]])
    const = class_to_material_map(cm, _catalog([0, 0], [3, 3]))
    assert np.all(const.labels() == 0) and const.n == 1


def test_random_classmap_composition(origin):
    gen = np.random.default_rng(9)
    k = 10
    ids = gen.integers(0, 8, k).tolist()
    cat = _catalog(None, ids)
    remap = np.array([cat.unique_materials.index(i) for i in ids])
    cat = MaterialCatalog(cat.material_ids, cat.unique_materials, remap, cat.records, cat.angles)
    cls = gen.integers(0, k, (12, 9)).astype(float)
    cls[0, 0] = INDEX_NODATA
    mm = class_to_material_map(ClassMap(grid_at(origin, cls, nodata=INDEX_NODATA), k), cat)
    lab = mm.labels()
    for (r, c), v in np.ndenumerate(cls):
        if v == INDEX_NODATA:
            assert lab[r, c] == -1
        else:
            assert mm.palette[lab[r, c]].id == ids[int(v)]


def test_remap_empty_table_identity(origin):
    lib = library()
    mm = map_from_labels(grid_at(origin, np.zeros((2, 2))), np.array([[0, 1], [1, 0]]), [lib.get(0), lib.get(1)])
    out = apply_remap(mm, RemapTable([]), lib)
    assert np.array_equal(out.labels(), mm.labels()) and [r.id for r in out.palette] == [0, 1]


def test_remap_pine_to_grass(origin):
    lib = library()
    mm = map_from_labels(grid_at(origin, np.zeros((2, 2))), np.array([[0, 1], [1, 0]]), [lib.get(3), lib.get(0)])
    out = apply_remap(mm, RemapTable([(3, "any", 1)]), lib)
    ids = np.array([[out.palette[v].id for v in row] for row in out.labels()])
    assert np.array_equal(ids, [[1, 0], [0, 1]])


def test_remap_structure_context(origin):
    lib = library()
    mm = map_from_labels(grid_at(origin, np.zeros((2, 2))), np.zeros((2, 2), dtype=int), [lib.get(0)])
    mask = np.array([[1, 0], [0, 0]])
    out = apply_remap(mm, RemapTable([("road", "structure", 2)]), lib, mask)
    ids = np.array([[out.palette[v].id for v in row] for row in out.labels()])
    assert np.array_equal(ids, [[2, 0], [0, 0]])


def test_remap_table_validation():
    with pytest.raises(ValueError):
        RemapTable([(1, "sky", 2)])
    with pytest.raises(ValueError):
        RemapTable([(1, "any", 2), (1, "any", 3)])


def test_palette_round_trip(tmp_path):
    lib = library()
    pal = [lib.get(4), lib.get(1)]
    write_palette(pal, tmp_path / "p.txt")
    assert read_palette(tmp_path / "p.txt", lib) == pal

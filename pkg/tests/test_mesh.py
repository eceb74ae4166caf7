import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scenesmith.mesh import TriangleMesh, read_obj, write_obj


def cube():
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    t = np.array([[0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
                  [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3]])
    return TriangleMesh(v, v[:, :2].copy(), t, name="cube")


def test_cube_counts(tmp_path):
    write_obj(cube(), tmp_path / "c.obj")
    lines = (tmp_path / "c.obj").read_text().splitlines()
    assert sum(ln.startswith("v ") for ln in lines) == 8
    assert sum(ln.startswith("f ") for ln in lines) == 12


def test_round_trip(tmp_path):
    m = cube()
    m.vertices = m.vertices * np.pi - 1e-7
    write_obj(m, tmp_path / "c.obj")
    back = read_obj(tmp_path / "c.obj")
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.uvs, m.uvs)
    assert {tuple(t) for t in back.triangles} == {tuple(t) for t in m.triangles}


@given(arrays(np.float64, st.tuples(st.integers(3, 12), st.just(3)), elements=st.floats(-1e5, 1e5)),
       st.data())
def test_round_trip_property(tmp_path_factory, verts, data):
    n = len(verts)
    tris = np.array(data.draw(st.lists(st.tuples(*[st.integers(0, n - 1)] * 3), min_size=1, max_size=10)))
    uvs = np.clip(np.abs(verts[:, :2]) / 1e5, 0, 1)
    m = TriangleMesh(verts, uvs, tris)
    p = tmp_path_factory.mktemp("o") / "m.obj"
    write_obj(m, p)
    back = read_obj(p)
    assert np.max(np.abs(back.vertices - verts)) <= 1e-9
    assert np.array_equal(back.triangles, tris)


def test_empty_mesh(tmp_path):
    write_obj(TriangleMesh.empty("nothing"), tmp_path / "e.obj")
    text = (tmp_path / "e.obj").read_text()
    assert not any(ln.startswith(("v ", "f ")) for ln in text.splitlines())
    assert len(read_obj(tmp_path / "e.obj").vertices) == 0


def test_normals_and_areas():
    m = TriangleMesh(np.array([[0, 0, 0], [2, 0, 0], [0, 2, 0.0]]), np.zeros((3, 2)), np.array([[0, 1, 2]]))
    assert np.allclose(m.face_normals(), [[0, 0, 1]]) and np.allclose(m.face_areas(), [2.0])

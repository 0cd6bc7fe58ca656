import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from morphsim.errors import DegenerateFace, DegenerateNormal, MeshError, NonQuadFace, ParseError
from morphsim.quadmesh import (QuadMesh, checkerboard_midpoints, face_normal, face_normals, grid_mesh, load_obj,
                               save_obj, vertex_normals_mwe)

SQUARE = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
quads = arrays(float, (4, 3), elements=finite)


def test_face_normal_square():
    assert np.allclose(face_normal(*SQUARE), [0, 0, 1])
    assert np.allclose(face_normal(*SQUARE[::-1]), [0, 0, -1])


def test_face_normal_nonplanar():
    p = np.array([[0, 0, 0], [1, 0, 0.2], [1, 1, 0], [0, 1, -0.2]])
    expected = np.cross([1, 1, 0], [-1, 1, -0.4])
    assert np.allclose(face_normal(*p), expected / np.linalg.norm(expected), atol=1e-15)


def test_face_normal_degenerate():
    with pytest.raises(DegenerateFace):
        face_normal(*np.zeros((4, 3)))


@given(quads)
def test_face_normal_cyclic_invariance(q):
    n = np.cross(q[2] - q[0], q[3] - q[1])
    if np.linalg.norm(n) < 1e-6:
        return
    assert np.allclose(face_normal(*q), face_normal(*np.roll(q, 1, axis=0)), atol=1e-9)
    assert np.isclose(np.linalg.norm(face_normal(*q)), 1.0, atol=1e-12)


def test_grid_counts():
    mesh = grid_mesh(50, 10, 1.0)
    assert mesh.n_vertices == 561 and mesh.n_faces == 500


def test_grid_invariants():
    mesh = grid_mesh(4, 3, 0.5)
    # every interior edge traversed once in each direction
    directed = {(a, b) for f in mesh.faces for a, b in zip(f, np.roll(f, -1))}
    for a, b in directed:
        if (b, a) not in directed:
            assert a in mesh.boundary_vertices and b in mesh.boundary_vertices
    for v, fs in enumerate(mesh.vertex_faces):
        assert set(fs) == {i for i, f in enumerate(mesh.faces) if v in f}
    assert np.allclose(face_normals(mesh.vertices, mesh.faces), [0, 0, 1])


def test_mesh_validation():
    rest = np.zeros((4, 2))
    with pytest.raises(MeshError):
        QuadMesh.from_rest(rest, [[0, 1, 2, 2]])
    with pytest.raises(MeshError):
        QuadMesh.from_rest(rest, [[0, 1, 2, 4]])
    with pytest.raises(NonQuadFace):
        QuadMesh.from_rest(rest, [[0, 1, 2]])
    with pytest.raises(MeshError):
        QuadMesh(np.zeros((3, 3)), rest, [[0, 1, 2, 3]])
    square2 = grid_mesh(2, 1)
    bad = square2.faces.copy()
    bad[1] = bad[1][::-1]
    with pytest.raises(MeshError, match="winding"):
        QuadMesh.from_rest(square2.rest_positions, bad)


def test_mesh_is_immutable():
    mesh = grid_mesh(2, 2)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 1.0


def test_mwe_flat_and_shared_normal(rng):
    mesh = grid_mesh(3, 3)
    assert np.allclose(vertex_normals_mwe(mesh), [0, 0, 1])
    R, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    tilted = mesh.with_vertices(mesh.vertices @ R.T)
    n = vertex_normals_mwe(tilted)
    assert np.allclose(n, n[0], atol=1e-12)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)


def test_mwe_symmetric_tent():
    mesh = grid_mesh(2, 2)
    v = mesh.vertices.copy()
    v[4, 2] = 0.3  # centre vertex raised: four faces tilted symmetrically
    n = vertex_normals_mwe(mesh.with_vertices(v))
    assert np.allclose(n[4], [0, 0, 1], atol=1e-12)


def test_mwe_degenerate():
    # two faces folded flat onto each other: normals cancel at the shared vertices
    mesh = grid_mesh(2, 1)
    v = mesh.vertices.copy()
    v[[2, 5], 0] = 0.0
    with pytest.raises(DegenerateNormal):
        vertex_normals_mwe(mesh.with_vertices(v))


def cube_sphere(n, radius=1.0):
    """Cube faces subdivided n x n and projected to the sphere; corners have valence 3."""
    verts, faces, index = [], [], {}

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    t = np.linspace(-1, 1, n + 1)
    for axis in range(3):
        for sign in (-1, 1):
            a, b = [i for i in range(3) if i != axis]
            for i in range(n):
                for j in range(n):
                    corners = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = np.zeros(3)
                        p[axis], p[a], p[b] = sign, t[i + di], t[j + dj]
                        corners.append(vid(p))
                    quad = np.array([verts[c] for c in corners])
                    if np.cross(quad[2] - quad[0], quad[3] - quad[1]) @ quad.mean(axis=0) < 0:
                        corners = corners[::-1]
                    faces.append(corners)
    V = np.array(verts)
    V = radius * V / np.linalg.norm(V, axis=1, keepdims=True)
    return QuadMesh(V, np.zeros((len(V), 2)), np.array(faces))


def max_sphere_angle_error(mesh):
    n = vertex_normals_mwe(mesh)
    exact = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    return np.degrees(np.arccos(np.clip(np.einsum("ij,ij->i", n, exact), -1, 1)))


def test_mwe_sphere_valence_three():
    mesh = cube_sphere(8)
    valence = np.array([len(f) for f in mesh.vertex_faces])
    err = max_sphere_angle_error(mesh)
    assert np.any(valence == 3)
    assert err[valence == 3].max() < 2.0


def test_mwe_sphere_refinement():
    coarse = max_sphere_angle_error(cube_sphere(4)).max()
    fine = max_sphere_angle_error(cube_sphere(8)).max()
    assert fine < coarse


def test_checkerboard_midpoints_square():
    mesh = QuadMesh(SQUARE, SQUARE[:, :2], [[0, 1, 2, 3]])
    m = checkerboard_midpoints(mesh)[0]
    assert np.allclose(m, [[0.5, 0, 0], [1, 0.5, 0], [0.5, 1, 0], [0, 0.5, 0]])


@given(quads)
def test_varignon(q):
    mesh = QuadMesh(q, np.zeros((4, 2)), [[0, 1, 2, 3]])
    m = checkerboard_midpoints(mesh)[0]
    assert np.allclose(m[0] - m[1] + m[2] - m[3], 0.0, atol=1e-12)


def test_obj_round_trip(tmp_path, rng):
    mesh = grid_mesh(2, 2, 0.7)
    mesh = mesh.with_vertices(mesh.vertices + rng.normal(scale=0.1, size=mesh.vertices.shape))
    path = tmp_path / "m.obj"
    save_obj(mesh, path)
    back = load_obj(path)
    assert np.array_equal(back.faces, mesh.faces)
    assert np.allclose(back.vertices, mesh.vertices, rtol=1e-9, atol=0)
    assert np.allclose(back.rest_positions, mesh.rest_positions, rtol=1e-9, atol=0)
    assert (tmp_path / "m.rest.json").exists()


def test_obj_errors(tmp_path):
    tri = tmp_path / "tri.obj"
    tri.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    with pytest.raises(NonQuadFace):
        load_obj(tri)
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 zero\n")
    with pytest.raises(ParseError):
        load_obj(bad)


def test_obj_without_sidecar(tmp_path):
    path = tmp_path / "plain.obj"
    path.write_text("v 0 0 0\nv 2 0 0\nv 2 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_obj(path)
    assert np.allclose(mesh.rest_positions, [[0, 0], [2, 0], [2, 1], [0, 1]])


@settings(max_examples=25)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(0.1, 3.0))
def test_grid_normals_unit(nx, ny, pitch):
    mesh = grid_mesh(nx, ny, pitch)
    assert mesh.n_faces == nx * ny
    n = vertex_normals_mwe(mesh)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
    assert math.isclose(np.ptp(mesh.rest_positions[:, 0]), nx * pitch)

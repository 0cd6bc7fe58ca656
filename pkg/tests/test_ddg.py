import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from conftest import cylinder_map, interior_faces, random_rotation, sphere_map, surface_mesh
from morphsim.ddg import (CENTER_KL, UNIT_SQUARE_KL, apply_projective, face_forms, first_form_kl,
                          first_form_uv, fit_unit_square_map, fit_unit_square_maps, jacobian_at_center,
                          second_form_kl, to_uv)
from morphsim.errors import SingularJacobian, SingularSystem
from morphsim.quadmesh import QuadMesh, vertex_normals_mwe

UNIT = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
PROJ = [(0, 0), (1, 0), (1.2, 1.1), (-0.1, 0.9)]


def test_identity_and_scale_maps():
    m = fit_unit_square_map(*UNIT_SQUARE_KL)
    assert np.allclose(m.coefficients, [1, 0, 0, 0, 1, 0, 0, 0], atol=1e-14)
    assert np.allclose(jacobian_at_center(m), np.eye(2), atol=1e-14)
    m2 = fit_unit_square_map(*(2 * UNIT_SQUARE_KL))
    assert np.allclose(m2.coefficients, [2, 0, 0, 0, 2, 0, 0, 0], atol=1e-14)
    assert np.allclose(jacobian_at_center(m2), 2 * np.eye(2), atol=1e-14)


def test_projective_map_reproduces_corners():
    m = fit_unit_square_map(*PROJ)
    u, v = m(UNIT_SQUARE_KL[:, 0], UNIT_SQUARE_KL[:, 1])
    assert np.allclose(np.column_stack([u, v]), PROJ, atol=1e-10, rtol=0)


def test_jacobian_matches_finite_differences():
    m = fit_unit_square_map(*PROJ)
    k, l = CENTER_KL
    step = 1e-6
    du_k = (np.array(m(k + step, l)) - np.array(m(k - step, l))) / (2 * step)
    du_l = (np.array(m(k, l + step)) - np.array(m(k, l - step))) / (2 * step)
    fd = np.column_stack([du_k, du_l])
    J = jacobian_at_center(m)
    assert np.max(np.abs(J - fd)) <= 1e-6 * np.max(np.abs(fd))


def test_singular_quad():
    with pytest.raises(SingularSystem):
        fit_unit_square_map((0, 0), (1, 0), (2, 0), (3, 0))


def random_convex_quads(rng, n):
    """Jittered squares, rotated and scaled: always convex and non-degenerate."""
    base = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    q = base + rng.uniform(-0.2, 0.2, size=(n, 4, 2))
    ang = rng.uniform(0, 2 * np.pi, n)
    rot = np.stack([np.stack([np.cos(ang), -np.sin(ang)], -1), np.stack([np.sin(ang), np.cos(ang)], -1)], -2)
    scale = rng.uniform(0.1, 5, n)[:, None, None]
    return scale * q @ np.swapaxes(rot, -1, -2) + rng.uniform(-50, 50, size=(n, 1, 2))


def test_fit_thousand_random_quads(rng):
    quads = random_convex_quads(rng, 1000)
    coeffs = fit_unit_square_maps(quads)
    u, v = apply_projective(coeffs[:, None, :], UNIT_SQUARE_KL[None, :, 0], UNIT_SQUARE_KL[None, :, 1])
    err = np.abs(np.stack([u, v], -1) - quads)
    assert np.max(err / np.maximum(1.0, np.abs(quads))) < 1e-10


def test_first_form_kl_examples():
    assert np.allclose(first_form_kl(UNIT), np.eye(2))
    assert np.allclose(first_form_kl(np.zeros((4, 3))), 0)


def test_first_form_uv_examples(rng):
    J = jacobian_at_center(fit_unit_square_map(*UNIT[:, :2]))
    assert np.allclose(first_form_uv(first_form_kl(UNIT), J), np.eye(2), atol=1e-14)
    assert np.allclose(first_form_uv(np.eye(2), 2 * np.eye(2)), np.eye(2) / 4)
    S = rng.normal(size=(2, 2))
    S = S + S.T
    Jr = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    Jinv = np.linalg.inv(Jr)
    assert np.allclose(to_uv(S, Jr), Jinv.T @ S @ Jinv)
    with pytest.raises(SingularJacobian):
        to_uv(np.eye(2), np.zeros((2, 2)))


def test_second_form_flat_is_zero():
    normals = np.tile([0, 0, 1.0], (4, 1))
    assert np.allclose(second_form_kl(UNIT, normals), 0)


def _form_errors(fmap, pitch, half_extent=6.0):
    f, forms = fmap
    mesh = surface_mesh(f, half_extent, pitch)
    ff = face_forms(mesh)
    inside = interior_faces(mesh)
    c = mesh.rest_positions[mesh.faces].mean(axis=1)
    I, II = forms(c[:, 0], c[:, 1])
    return np.abs(ff.I_uv - I)[inside].max(), np.abs(ff.II_uv - II)[inside].max(), ff, inside


@pytest.mark.parametrize("fmap", [cylinder_map(), sphere_map()], ids=["cylinder", "sphere"])
def test_forms_converge_under_refinement(fmap):
    errs = [_form_errors(fmap, h)[:2] for h in (2.0, 1.0, 0.5, 0.25)]
    for (eI, eII), (fI, fII) in zip(errs, errs[1:]):
        assert fI < eI and fII < eII


def test_cylinder_second_form_value():
    _, eII, ff, inside = _form_errors(cylinder_map(), 1.0)
    assert np.allclose(ff.II_uv[inside].mean(axis=0), [[0.1, 0], [0, 0]], atol=1e-3)
    assert eII < 1e-3


def test_sphere_second_form_value():
    _, _, ff, inside = _form_errors(sphere_map(), 0.5)
    # principal curvatures: eigenvalues of I^-1 II are both 1/R on a sphere
    shape_op = np.linalg.solve(ff.I_uv[inside], ff.II_uv[inside])
    assert np.allclose(np.linalg.eigvals(shape_op).real, 0.1, atol=1e-3)


def test_second_form_asymmetry_shrinks():
    f, _ = sphere_map()
    asym = []
    for h in (2.0, 1.0, 0.5):
        mesh = surface_mesh(lambda u, v: f(u + 0.3 * v, v), 6.0, h)  # sheared parameters
        ff = face_forms(mesh)
        inside = interior_faces(mesh)
        asym.append(np.abs(ff.II_uv[inside, 0, 1] - ff.II_uv[inside, 1, 0]).max())
    assert asym[2] < asym[1] < asym[0]


def test_rigid_motion_invariance(rng):
    f, _ = sphere_map()
    mesh = surface_mesh(f, 3.0, 1.0)
    ff = face_forms(mesh)
    R = random_rotation(rng)
    moved = mesh.with_vertices(mesh.vertices @ R.T + rng.normal(size=3))
    gg = face_forms(moved)
    assert np.allclose(ff.I_kl, gg.I_kl, atol=1e-10)
    assert np.allclose(ff.II_kl, gg.II_kl, atol=1e-10)


@settings(max_examples=50)
@given(st.lists(st.floats(-0.3, 0.3), min_size=12, max_size=12), st.floats(0.2, 4.0))
def test_uv_congruence_property(jitter, scale):
    rest = scale * (UNIT[:, :2] + np.reshape(jitter[:8], (4, 2)))
    m = fit_unit_square_maps(rest[None])
    a, b = rest[2] - rest[0], rest[3] - rest[1]
    det = a[0] * b[1] - a[1] * b[0]
    assume(abs(det) > 1e-3 * scale**2)
    cur = np.column_stack([rest, np.array(jitter[8:]) * scale])
    mesh = QuadMesh(cur, rest, [[0, 1, 2, 3]])
    ff = face_forms(mesh, vertex_normals_mwe(mesh))
    Jinv = np.linalg.inv(ff.J[0])
    assert np.allclose(ff.I_uv[0], Jinv.T @ ff.I_kl[0] @ Jinv)
    assert np.allclose(ff.I_kl[0], ff.I_kl[0].T)
    assert np.all(np.linalg.eigvalsh(ff.I_kl[0]) >= -1e-12)
    assert m.shape == (1, 8)

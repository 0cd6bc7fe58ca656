import numpy as np
import pytest

from morphsim.quadmesh import QuadMesh, grid_mesh

R_TEST = 10.0


def cylinder_map(R=R_TEST):
    """Arc-length cylinder about an axis parallel to y, outward normal +z at u = 0."""
    def f(u, v):
        return np.stack([R * np.sin(u / R), v, R * np.cos(u / R) - R], axis=-1)

    def forms(u, v):
        one = np.ones_like(u)
        I = np.stack([np.stack([one, 0 * one], -1), np.stack([0 * one, one], -1)], -2)
        II = np.stack([np.stack([one / R, 0 * one], -1), np.stack([0 * one, 0 * one], -1)], -2)
        return I, II

    return f, forms


def sphere_map(R=R_TEST):
    """Longitude/latitude scaled to arc length at the equator; outward normals."""
    def f(u, v):
        lam, phi = u / R, v / R
        return np.stack([R * np.cos(phi) * np.cos(lam) - R, R * np.cos(phi) * np.sin(lam), R * np.sin(phi)],
                        axis=-1)

    def forms(u, v):
        c2 = np.cos(v / R) ** 2
        zero = 0 * u
        I = np.stack([np.stack([c2, zero], -1), np.stack([zero, 1 + zero], -1)], -2)
        return I, I / R

    return f, forms


def surface_mesh(f, half_extent, pitch):
    """Grid over [-e, e]^2 in parameter space lifted by ``f``."""
    n = int(round(2 * half_extent / pitch))
    flat = grid_mesh(n, n, pitch, origin=(-half_extent, -half_extent))
    rest = flat.rest_positions
    return QuadMesh(f(rest[:, 0], rest[:, 1]), rest, flat.faces)


def interior_faces(mesh):
    """Faces none of whose vertices lie on the boundary."""
    boundary = np.zeros(mesh.n_vertices, dtype=bool)
    boundary[mesh.boundary_vertices] = True
    return ~boundary[mesh.faces].any(axis=1)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_shell_energy(rng, n=4, pitch=1.0, noise=0.15):
    """Energy on an n x n grid with random targets plus a perturbed configuration."""
    from morphsim.ddg import face_jacobians
    from morphsim.energy import ShellEnergy, Weights
    from morphsim.material import LayerSpec, target_forms, uniaxial_strain

    mesh = grid_mesh(n, n, pitch)
    nf = mesh.n_faces
    ang = rng.uniform(0, np.pi, nf)
    d = np.column_stack([np.cos(ang), np.sin(ang)])
    bottom = LayerSpec(1.0, 0.5, uniaxial_strain(rng.uniform(-0.1, 0.1, nf), d))
    top = LayerSpec(1.3, 0.5, uniaxial_strain(rng.uniform(-0.1, 0.1, nf), d))
    tf = target_forms(bottom, top).in_face_frames(face_jacobians(mesh.rest_positions, mesh.faces))
    energy = ShellEnergy(mesh, tf.A_bar, tf.B_bar, Weights(tf.w_first, tf.w_second, 1.0, 1.0, 1.0))
    x = mesh.vertices + rng.normal(scale=noise * pitch, size=mesh.vertices.shape)
    return mesh, energy, x.ravel()

"""Checkerboard estimators of the first and second fundamental forms.

Each quad is the image of a unit square whose corners, in the rotated
(k, l) frame, are ``c1 = (0, 0)``, ``c2 = (s, -s)``, ``c3 = (2s, 0)`` and
``c4 = (s, s)`` with ``s = sqrt(2)/2``.  Derivatives along k and l at the
square centre are central differences over the face diagonals.  A
projective map from that square onto the rest quad converts (k, l) forms to
the parametric (u, v) frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularJacobian, SingularSystem

SQRT2 = np.sqrt(2.0)
_S = SQRT2 / 2.0
UNIT_SQUARE_KL = np.array([[0.0, 0.0], [_S, -_S], [SQRT2, 0.0], [_S, _S]])
CENTER_KL = np.array([_S, 0.0])


@dataclass(frozen=True)
class ProjectiveMap:
    """``u = (a k + b l + c) / w``, ``v = (d k + e l + f) / w``, ``w = g k + h l + 1``."""

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    g: float
    h: float

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d, self.e, self.f, self.g, self.h])

    def __call__(self, k, l):
        return apply_projective(self.coefficients, k, l)


def apply_projective(coeffs, k, l):
    a, b, c, d, e, f, g, h = np.moveaxis(np.asarray(coeffs, dtype=float), -1, 0)
    w = g * k + h * l + 1.0
    return (a * k + b * l + c) / w, (d * k + e * l + f) / w


def _unit_square_systems(p):
    """Batched 8x8 systems mapping the unit square onto quads ``p`` (F, 4, 2)."""
    u = p[..., 0]
    v = p[..., 1]
    n = p.shape[0]
    M = np.zeros((n, 8, 8))
    rhs = np.zeros((n, 8))
    # corner c2
    M[:, 0, [0, 1]] = [1.0, -1.0]
    M[:, 0, 6], M[:, 0, 7] = -u[:, 1], u[:, 1]
    M[:, 1, [3, 4]] = [1.0, -1.0]
    M[:, 1, 6], M[:, 1, 7] = -v[:, 1], v[:, 1]
    # corner c1
    M[:, 2, 2] = 1.0
    M[:, 5, 5] = 1.0
    # corner c3
    M[:, 3, 0] = 1.0
    M[:, 3, 6] = -u[:, 2]
    M[:, 4, 3] = 1.0
    M[:, 4, 6] = -v[:, 2]
    # corner c4
    M[:, 6, [0, 1]] = [1.0, 1.0]
    M[:, 6, 6] = M[:, 6, 7] = -u[:, 3]
    M[:, 7, [3, 4]] = [1.0, 1.0]
    M[:, 7, 6] = M[:, 7, 7] = -v[:, 3]
    rhs[:, 0] = SQRT2 * (u[:, 1] - u[:, 0])
    rhs[:, 1] = SQRT2 * (v[:, 1] - v[:, 0])
    rhs[:, 2] = u[:, 0]
    rhs[:, 3] = (u[:, 2] - u[:, 0]) / SQRT2
    rhs[:, 4] = (v[:, 2] - v[:, 0]) / SQRT2
    rhs[:, 5] = v[:, 0]
    rhs[:, 6] = SQRT2 * (u[:, 3] - u[:, 0])
    rhs[:, 7] = SQRT2 * (v[:, 3] - v[:, 0])
    return M, rhs


def fit_unit_square_maps(rest_quads, rcond: float = 1e-12) -> np.ndarray:
    """Projective-map coefficients ``(a..h)`` for every quad, shape (F, 8)."""
    p = np.asarray(rest_quads, dtype=float).reshape(-1, 4, 2)
    M, rhs = _unit_square_systems(p)
    s = np.linalg.svd(M, compute_uv=False)
    bad = np.nonzero(s[:, -1] <= rcond * s[:, 0])[0]
    if len(bad):
        raise SingularSystem(f"quad {bad[0]} is degenerate: unit-square map is not unique")
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def fit_unit_square_map(p1, p2, p3, p4) -> ProjectiveMap:
    coeffs = fit_unit_square_maps(np.array([p1, p2, p3, p4], dtype=float)[None])[0]
    return ProjectiveMap(*coeffs)


def jacobians_at_center(coeffs) -> np.ndarray:
    """d(u, v)/d(k, l) at the square centre, shape (..., 2, 2)."""
    coeffs = np.asarray(coeffs, dtype=float)
    a, b, c, d, e, f, g, h = np.moveaxis(coeffs, -1, 0)
    k, l = CENTER_KL
    w2 = (g * k + h * l + 1.0) ** 2
    J = np.empty(coeffs.shape[:-1] + (2, 2))
    J[..., 0, 0] = ((a * h - g * b) * l + a - g * c) / w2
    J[..., 0, 1] = ((g * b - a * h) * k + b - h * c) / w2
    J[..., 1, 0] = ((d * h - g * e) * l + d - g * f) / w2
    J[..., 1, 1] = ((e * g - d * h) * k + e - h * f) / w2
    return J


def jacobian_at_center(pmap: ProjectiveMap) -> np.ndarray:
    return jacobians_at_center(pmap.coefficients)


def face_jacobians(rest_positions, faces) -> np.ndarray:
    """Cached-per-face Jacobians of the unit-square map onto the rest quads."""
    return jacobians_at_center(fit_unit_square_maps(np.asarray(rest_positions)[faces]))


def diagonal_derivatives(quads):
    """``(v3 - v1)/sqrt2`` and ``(v4 - v2)/sqrt2`` for quads (..., 4, dim)."""
    q = np.asarray(quads, dtype=float)
    return (q[..., 2, :] - q[..., 0, :]) / SQRT2, (q[..., 3, :] - q[..., 1, :]) / SQRT2


def first_form_kl(quads) -> np.ndarray:
    dk, dl = diagonal_derivatives(quads)
    out = np.empty(dk.shape[:-1] + (2, 2))
    out[..., 0, 0] = np.einsum("...i,...i", dk, dk)
    out[..., 0, 1] = out[..., 1, 0] = np.einsum("...i,...i", dk, dl)
    out[..., 1, 1] = np.einsum("...i,...i", dl, dl)
    return out


def second_form_kl(quads, normals) -> np.ndarray:
    """Unsymmetrised ``[[ek.dk, ek.dl], [el.dk, el.dl]]`` with normal differences e."""
    dk, dl = diagonal_derivatives(quads)
    ek, el = diagonal_derivatives(normals)
    out = np.empty(dk.shape[:-1] + (2, 2))
    out[..., 0, 0] = np.einsum("...i,...i", ek, dk)
    out[..., 0, 1] = np.einsum("...i,...i", ek, dl)
    out[..., 1, 0] = np.einsum("...i,...i", el, dk)
    out[..., 1, 1] = np.einsum("...i,...i", el, dl)
    return out


def to_uv(form_kl, J, tol: float = 1e-12) -> np.ndarray:
    """Congruence ``J^-T form J^-1``; works for first and second forms alike."""
    J = np.asarray(J, dtype=float)
    det = np.linalg.det(J)
    if np.any(np.abs(det) <= tol):
        raise SingularJacobian(f"|det J| = {np.min(np.abs(det)):.3e} below tolerance")
    Jinv = np.linalg.inv(J)
    return np.swapaxes(Jinv, -1, -2) @ np.asarray(form_kl, dtype=float) @ Jinv


first_form_uv = to_uv
second_form_uv = to_uv


@dataclass(frozen=True)
class FaceForms:
    J: np.ndarray
    I_kl: np.ndarray
    I_uv: np.ndarray
    II_kl: np.ndarray
    II_uv: np.ndarray


def face_forms(mesh, vertex_normals=None, J=None) -> FaceForms:
    """All four fundamental-form estimates for every face of ``mesh``."""
    from .quadmesh import vertex_normals_mwe

    if J is None:
        J = face_jacobians(mesh.rest_positions, mesh.faces)
    if vertex_normals is None:
        vertex_normals = vertex_normals_mwe(mesh)
    quads = mesh.vertices[mesh.faces]
    I_kl = first_form_kl(quads)
    II_kl = second_form_kl(quads, np.asarray(vertex_normals)[mesh.faces])
    return FaceForms(J, I_kl, to_uv(I_kl, J), II_kl, to_uv(II_kl, J))

"""Stacked residuals and sparse Jacobian of the discrete bilayer energy.

Rows are face-major, ten per face, in the order::

    first_11, first_12, first_22,
    second_11, second_12, second_21, second_22,
    coplanar, convex, similar

and every row is multiplied by the square root of its weight, so the total
energy is exactly ``r @ r``.  Unknowns are the 3|V| current coordinates;
vertex normals are derived from them and differentiated through.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateAngle, DegenerateFace, DegenerateNormal
from .quadmesh import DEGENERACY_TOL, QuadMesh

SQRT2 = np.sqrt(2.0)
ROWS_PER_FACE = 10
ROW_NAMES = (
    "first_11", "first_12", "first_22",
    "second_11", "second_12", "second_21", "second_22",
    "coplanar", "convex", "similar",
)


@dataclass(frozen=True)
class Weights:
    first: float
    second: float
    coplanar: float = 1.0
    convex: float = 1.0
    similar: float = 1.0

    def row_scales(self) -> np.ndarray:
        w = [self.first] * 3 + [self.second] * 4 + [self.coplanar, self.convex, self.similar]
        return np.sqrt(np.array(w, dtype=float))


@dataclass(frozen=True)
class ResidualSystem:
    residuals: np.ndarray
    jacobian: sp.csr_matrix | None
    weights: Weights

    @property
    def energy(self) -> float:
        return float(self.residuals @ self.residuals)


def _dot(a, b):
    return np.einsum("...i,...i", a, b)


def _skew(v):
    """Cross-product matrices, ``_skew(v) @ w == cross(v, w)``."""
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1], S[..., 0, 2] = -v[..., 2], v[..., 1]
    S[..., 1, 0], S[..., 1, 2] = v[..., 2], -v[..., 0]
    S[..., 2, 0], S[..., 2, 1] = -v[..., 1], v[..., 0]
    return S


def _pad3(points):
    p = np.asarray(points, dtype=float)
    if p.shape[-1] == 2:
        p = np.concatenate([p, np.zeros(p.shape[:-1] + (1,))], axis=-1)
    return p


def data_residuals(quads, normals, A_bar, B_bar) -> np.ndarray:
    """Seven unweighted metric and curvature residuals per face, shape (..., 7)."""
    P = np.asarray(quads, dtype=float)
    N = np.asarray(normals, dtype=float)
    A_bar = np.asarray(A_bar, dtype=float)
    B_bar = np.asarray(B_bar, dtype=float)
    a = P[..., 2, :] - P[..., 0, :]
    b = P[..., 3, :] - P[..., 1, :]
    dk = N[..., 2, :] - N[..., 0, :]
    dl = N[..., 3, :] - N[..., 1, :]
    return np.stack(
        [
            _dot(a, a) / 2 - A_bar[..., 0, 0],
            SQRT2 * (_dot(a, b) / 2 - A_bar[..., 0, 1]),
            _dot(b, b) / 2 - A_bar[..., 1, 1],
            _dot(dk, a) / 2 - B_bar[..., 0, 0],
            _dot(dk, b) / 2 - B_bar[..., 0, 1],
            _dot(dl, a) / 2 - B_bar[..., 1, 0],
            _dot(dl, b) / 2 - B_bar[..., 1, 1],
        ],
        axis=-1,
    )


def interior_angles(quads, tol: float = DEGENERACY_TOL):
    """Unsigned corner angles (..., 4) plus the unit edge vectors used."""
    P = np.asarray(quads, dtype=float)
    u = np.roll(P, 1, axis=-2) - P   # towards previous corner
    w = np.roll(P, -1, axis=-2) - P  # towards next corner
    lu = np.linalg.norm(u, axis=-1)
    lw = np.linalg.norm(w, axis=-1)
    if np.any(lu < tol) or np.any(lw < tol):
        bad = np.nonzero(np.any((lu < tol) | (lw < tol), axis=-1).reshape(-1))[0]
        raise DegenerateAngle("zero-length edge in quad", face=int(bad[0]) if len(bad) else None)
    uh = u / lu[..., None]
    wh = w / lw[..., None]
    cos = np.clip(_dot(uh, wh), -1.0, 1.0)
    return np.arccos(cos), (uh, wh, lu, lw, cos)


def regularizer_residuals(quads, rest_quads) -> np.ndarray:
    """Unweighted coplanarity, convexity and similarity residuals, shape (..., 3)."""
    P = np.asarray(quads, dtype=float)
    R = _pad3(rest_quads)
    a = P[..., 2, :] - P[..., 0, :]
    coplanar = _dot(a, np.cross(P[..., 1, :] - P[..., 0, :], P[..., 3, :] - P[..., 0, :]))
    theta, _ = interior_angles(P)
    convex = theta.sum(axis=-1) - 2 * np.pi
    d = P[..., 2, :] + P[..., 0, :] - P[..., 1, :] - P[..., 3, :]
    dM = R[..., 2, :] + R[..., 0, :] - R[..., 1, :] - R[..., 3, :]
    similar = _dot(d, d) - _dot(dM, dM)
    return np.stack([coplanar, convex, similar], axis=-1)


class ShellEnergy:
    """Residual/Jacobian evaluator for a fixed topology, rest state and targets.

    ``A_bar`` and ``B_bar`` are the per-face targets already in the
    unit-square frame, shape (F, 2, 2).
    """

    def __init__(self, mesh: QuadMesh, A_bar, B_bar, weights: Weights):
        self.faces = mesh.faces
        self.n_vertices = mesh.n_vertices
        self.n_faces = mesh.n_faces
        self.A_bar = np.asarray(A_bar, dtype=float)
        self.B_bar = np.asarray(B_bar, dtype=float)
        if self.A_bar.shape != (self.n_faces, 2, 2) or self.B_bar.shape != (self.n_faces, 2, 2):
            raise ValueError("targets must have shape (n_faces, 2, 2)")
        self.weights = weights
        self.rest_quads = _pad3(mesh.rest_positions)[mesh.faces]
        self._incidence = mesh.incidence
        self._scales = np.tile(weights.row_scales(), self.n_faces)

        nf, nv = self.n_faces, self.n_vertices
        # columns of every (face, corner, xyz) entry
        self._cols = (3 * self.faces[:, :, None] + np.arange(3)).reshape(nf, 1, 12)
        self._local_rows = np.broadcast_to(
            (ROWS_PER_FACE * np.arange(nf)[:, None] + np.arange(ROWS_PER_FACE))[:, :, None],
            (nf, ROWS_PER_FACE, 12),
        ).ravel()
        self._local_cols = np.broadcast_to(self._cols, (nf, ROWS_PER_FACE, 12)).ravel()
        # rows for the normal chain (second-form rows 3..6)
        self._normal_rows = np.broadcast_to(
            (ROWS_PER_FACE * np.arange(nf)[:, None] + 3 + np.arange(4))[:, :, None], (nf, 4, 12)
        ).ravel()
        self._normal_cols = np.broadcast_to(self._cols, (nf, 4, 12)).ravel()
        self._sum_faces = sp.kron(self._incidence, sp.identity(3), format="csr")
        self._face_block_indptr = np.arange(0, 4 * nf + 1, 4)
        self._shape = (ROWS_PER_FACE * nf, 3 * nv)

    @classmethod
    def from_targets(cls, mesh: QuadMesh, targets, weights: Weights | None = None):
        if weights is None:
            weights = Weights(targets.w_first, targets.w_second)
        return cls(mesh, targets.A_bar, targets.B_bar, weights)

    # geometry -----------------------------------------------------------
    def _geometry(self, x):
        X = np.asarray(x, dtype=float).reshape(self.n_vertices, 3)
        P = X[self.faces]
        a = P[:, 2] - P[:, 0]
        b = P[:, 3] - P[:, 1]
        m = np.cross(a, b)
        mn = np.linalg.norm(m, axis=1)
        bad = np.nonzero(mn < DEGENERACY_TOL)[0]
        if len(bad):
            raise DegenerateFace(f"face {bad[0]} has vanishing diagonal cross product", face=int(bad[0]))
        N = m / mn[:, None]
        S = self._incidence @ N
        sn = np.linalg.norm(S, axis=1)
        bad = np.nonzero(sn < DEGENERACY_TOL)[0]
        if len(bad):
            v = int(bad[0])
            f = int(self._incidence.indices[self._incidence.indptr[v]])
            raise DegenerateNormal(f"face normals cancel at vertex {v} (face {f})", vertex=v, face=f)
        n = S / sn[:, None]
        return X, P, a, b, N, mn, n, sn

    def normals(self, x) -> np.ndarray:
        return self._geometry(x)[6]

    def _raw_residuals(self, P, n):
        data = data_residuals(P, n[self.faces], self.A_bar, self.B_bar)
        try:
            reg = regularizer_residuals(P, self.rest_quads)
        except DegenerateAngle as exc:
            lu = np.linalg.norm(np.roll(P, 1, axis=1) - P, axis=-1)
            face = int(np.nonzero(np.any(lu < DEGENERACY_TOL, axis=1))[0][0])
            raise DegenerateAngle(f"zero-length edge in face {face}", face=face) from exc
        return np.concatenate([data, reg], axis=1)

    def residuals(self, x) -> np.ndarray:
        _, P, _, _, _, _, n, _ = self._geometry(x)
        return (self._raw_residuals(P, n) * self.weights.row_scales()).ravel()

    def energy(self, x) -> float:
        r = self.residuals(x)
        return float(r @ r)

    # derivatives --------------------------------------------------------
    def _local_jacobian(self, P, a, b, n):
        """Derivatives with normals held fixed, shape (F, 10, 4, 3)."""
        nf = self.n_faces
        nF = n[self.faces]
        dk = nF[:, 2] - nF[:, 0]
        dl = nF[:, 3] - nF[:, 1]
        D = np.zeros((nf, ROWS_PER_FACE, 4, 3))
        D[:, 0, 2], D[:, 0, 0] = a, -a
        h = SQRT2 / 2
        D[:, 1, 2], D[:, 1, 0], D[:, 1, 3], D[:, 1, 1] = h * b, -h * b, h * a, -h * a
        D[:, 2, 3], D[:, 2, 1] = b, -b
        D[:, 3, 2], D[:, 3, 0] = dk / 2, -dk / 2
        D[:, 4, 3], D[:, 4, 1] = dk / 2, -dk / 2
        D[:, 5, 2], D[:, 5, 0] = dl / 2, -dl / 2
        D[:, 6, 3], D[:, 6, 1] = dl / 2, -dl / 2
        # coplanarity: a . (e1 x e3)
        e1 = P[:, 1] - P[:, 0]
        e3 = P[:, 3] - P[:, 0]
        ga, g1, g3 = np.cross(e1, e3), np.cross(e3, a), np.cross(a, e1)
        D[:, 7, 2], D[:, 7, 1], D[:, 7, 3] = ga, g1, g3
        D[:, 7, 0] = -(ga + g1 + g3)
        # convexity: sum of arccos corner angles
        theta, (uh, wh, lu, lw, cos) = interior_angles(P)
        sin = np.maximum(np.sin(theta), 1e-12)[..., None]
        du = -(wh - cos[..., None] * uh) / (lu[..., None] * sin)
        dw = -(uh - cos[..., None] * wh) / (lw[..., None] * sin)
        conv = -(du + dw)
        conv += np.roll(du, -1, axis=1)  # u at corner j+1 points to corner j
        conv += np.roll(dw, 1, axis=1)   # w at corner j-1 points to corner j
        D[:, 8] = conv
        # similarity: |v1 + v3 - v2 - v4|^2
        d = P[:, 2] + P[:, 0] - P[:, 1] - P[:, 3]
        D[:, 9, 0], D[:, 9, 2], D[:, 9, 1], D[:, 9, 3] = 2 * d, 2 * d, -2 * d, -2 * d
        return D

    def _normal_jacobian(self, a, b, N, mn, n, sn) -> sp.csr_matrix:
        """d(vertex normals)/dx as a (3V, 3V) sparse matrix."""
        nf, nv = self.n_faces, self.n_vertices
        eye = np.eye(3)
        Q = (eye - N[:, :, None] * N[:, None, :]) / mn[:, None, None]
        dm = np.stack([_skew(b), -_skew(a), -_skew(b), _skew(a)], axis=1)  # (F, 4, 3, 3)
        blocks = Q[:, None] @ dm
        QM = sp.bsr_matrix(
            (blocks.reshape(-1, 3, 3), self.faces.ravel(), self._face_block_indptr), shape=(3 * nf, 3 * nv)
        )
        Pn = (eye - n[:, :, None] * n[:, None, :]) / sn[:, None, None]
        Pblk = sp.bsr_matrix((Pn, np.arange(nv), np.arange(nv + 1)), shape=(3 * nv, 3 * nv))
        return (Pblk @ (self._sum_faces @ QM.tocsr())).tocsr()

    def jacobian_from_geometry(self, geom) -> sp.csr_matrix:
        X, P, a, b, N, mn, n, sn = geom
        nf = self.n_faces
        D = self._local_jacobian(P, a, b, n)
        J_local = sp.coo_matrix(
            (D.reshape(nf, ROWS_PER_FACE, 12).ravel(), (self._local_rows, self._local_cols)), shape=self._shape
        )
        # coefficients of the vertex normals in rows second_11..second_22
        C = np.zeros((nf, 4, 4, 3))
        C[:, 0, 2], C[:, 0, 0] = a / 2, -a / 2
        C[:, 1, 2], C[:, 1, 0] = b / 2, -b / 2
        C[:, 2, 3], C[:, 2, 1] = a / 2, -a / 2
        C[:, 3, 3], C[:, 3, 1] = b / 2, -b / 2
        Cn = sp.coo_matrix((C.ravel(), (self._normal_rows, self._normal_cols)), shape=self._shape).tocsr()
        J = J_local.tocsr() + Cn @ self._normal_jacobian(a, b, N, mn, n, sn)
        return (sp.diags(self._scales) @ J).tocsr()

    def jacobian(self, x) -> sp.csr_matrix:
        return self.jacobian_from_geometry(self._geometry(x))

    def evaluate(self, x, jacobian: str | None = "analytic") -> ResidualSystem:
        """Residuals plus an ``"analytic"`` or ``"forward"`` difference Jacobian (or none)."""
        geom = self._geometry(x)
        r = (self._raw_residuals(geom[1], geom[6]) * self.weights.row_scales()).ravel()
        if jacobian is None:
            J = None
        elif jacobian == "analytic":
            J = self.jacobian_from_geometry(geom)
        elif jacobian == "forward":
            J = sp.csr_matrix(forward_difference_jacobian(self.residuals, x, r0=r))
        else:
            raise ValueError(f"unknown jacobian mode {jacobian!r}")
        return ResidualSystem(r, J, self.weights)

    def __call__(self, x):
        sys_ = self.evaluate(x)
        return sys_.residuals, sys_.jacobian


def forward_difference_jacobian(fun, x, step: float = 1e-7, r0=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r0 = fun(x) if r0 is None else r0
    J = np.empty((len(r0), len(x)))
    for j in range(len(x)):
        xp = x.copy()
        xp[j] += step
        J[:, j] = (fun(xp) - r0) / step
    return J


def central_difference_jacobian(fun, x, step: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        cols.append((fun(xp) - fun(xm)) / (2 * step))
    return np.column_stack(cols)


def assemble(mesh: QuadMesh, A_bar, B_bar, weights: Weights, jacobian: str | None = "analytic") -> ResidualSystem:
    """One-shot residual system at the mesh's current vertex positions."""
    return ShellEnergy(mesh, A_bar, B_bar, weights).evaluate(mesh.vertices.ravel(), jacobian=jacobian)

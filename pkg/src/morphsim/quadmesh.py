"""Quadrilateral meshes: connectivity, face/vertex normals and OBJ I/O.

A face stores its vertices as ``(v1, v2, v3, v4)`` in winding order; the
two diagonals used everywhere downstream are ``v1 -> v3`` and ``v2 -> v4``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateFace, DegenerateNormal, MeshError, NonQuadFace, ParseError

DEGENERACY_TOL = 1e-12  # mm^2 for face cross products, dimensionless for normal sums


@dataclass(frozen=True, eq=False)
class QuadMesh:
    """Quad mesh with a 3D current state and a 2D rest (parametric) state.

    Arrays are copied and made read-only on construction; use
    :meth:`with_vertices` to obtain a mesh with moved vertices.
    """

    vertices: np.ndarray
    rest_positions: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=float)
        rest = np.array(self.rest_positions, dtype=float)
        faces = np.array(self.faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {vertices.shape}")
        if rest.ndim != 2 or rest.shape[1] != 2:
            raise MeshError(f"rest_positions must have shape (n, 2), got {rest.shape}")
        if len(rest) != len(vertices):
            raise MeshError("rest_positions and vertices differ in length")
        if faces.ndim != 2 or faces.shape[1] != 4:
            raise NonQuadFace(f"faces must have shape (m, 4), got {faces.shape}")
        _check_faces(faces, len(vertices))
        for arr in (vertices, rest, faces):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "rest_positions", rest)
        object.__setattr__(self, "faces", faces)

    @classmethod
    def from_rest(cls, rest_positions, faces):
        """Flat mesh embedded at z = 0 of its own rest positions."""
        rest = np.asarray(rest_positions, dtype=float)
        vertices = np.column_stack([rest, np.zeros(len(rest))])
        return cls(vertices, rest, faces)

    def with_vertices(self, vertices) -> "QuadMesh":
        return QuadMesh(np.asarray(vertices, dtype=float).reshape(-1, 3), self.rest_positions, self.faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def edges(self) -> np.ndarray:
        """Sorted unique undirected edges, shape (E, 2)."""
        e = np.stack([self.faces, np.roll(self.faces, -1, axis=1)], axis=-1).reshape(-1, 2)
        return np.unique(np.sort(e, axis=1), axis=0)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Vertex-by-face 0/1 incidence matrix."""
        nf = self.n_faces
        rows = self.faces.ravel()
        cols = np.repeat(np.arange(nf), 4)
        return sp.csr_matrix((np.ones(4 * nf), (rows, cols)), shape=(self.n_vertices, nf))

    @cached_property
    def vertex_faces(self) -> list[np.ndarray]:
        inc = self.incidence
        return [inc.indices[inc.indptr[i]:inc.indptr[i + 1]] for i in range(self.n_vertices)]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        e = np.sort(np.stack([self.faces, np.roll(self.faces, -1, axis=1)], axis=-1).reshape(-1, 2), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return np.unique(uniq[counts == 1])

    def face_points(self, positions=None) -> np.ndarray:
        """Per-face corner positions, shape (F, 4, dim)."""
        pos = self.vertices if positions is None else np.asarray(positions)
        return pos[self.faces]


def _check_faces(faces, n_vertices):
    if len(faces) == 0:
        return
    if faces.min() < 0 or faces.max() >= n_vertices:
        raise MeshError("face references an out-of-range vertex index")
    srt = np.sort(faces, axis=1)
    if np.any(srt[:, 1:] == srt[:, :-1]):
        bad = int(np.nonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))[0][0])
        raise MeshError(f"face {bad} repeats a vertex")
    directed = np.stack([faces, np.roll(faces, -1, axis=1)], axis=-1).reshape(-1, 2)
    _, counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(counts > 1):
        raise MeshError("inconsistent winding: a directed edge is used by two faces")
    undirected = np.sort(directed, axis=1)
    _, counts = np.unique(undirected, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-manifold edge shared by more than two faces")


def grid_mesh(nx: int, ny: int, pitch: float = 1.0, origin=(0.0, 0.0)) -> QuadMesh:
    """Structured ``nx`` by ``ny`` grid, counterclockwise faces (normals +z)."""
    xs = origin[0] + pitch * np.arange(nx + 1)
    ys = origin[1] + pitch * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    rest = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    faces = np.stack(
        [idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(), idx[1:, 1:].ravel(), idx[1:, :-1].ravel()], axis=1
    )
    return QuadMesh.from_rest(rest, faces)


def face_normal(p1, p2, p3, p4, tol: float = DEGENERACY_TOL) -> np.ndarray:
    """Unit normal of one quad from the cross product of its diagonals."""
    m = np.cross(np.asarray(p3, float) - p1, np.asarray(p4, float) - p2)
    norm = np.linalg.norm(m)
    if norm < tol:
        raise DegenerateFace(f"diagonal cross product norm {norm:.3e} below tolerance")
    return m / norm


def face_normals(vertices, faces, tol: float = DEGENERACY_TOL, return_norms: bool = False):
    """Vectorised :func:`face_normal` over all faces."""
    P = np.asarray(vertices)[faces]
    m = np.cross(P[:, 2] - P[:, 0], P[:, 3] - P[:, 1])
    norms = np.linalg.norm(m, axis=1)
    bad = np.nonzero(norms < tol)[0]
    if len(bad):
        raise DegenerateFace(f"face {bad[0]} is degenerate (|N| = {norms[bad[0]]:.3e})", face=int(bad[0]))
    normals = m / norms[:, None]
    return (normals, m, norms) if return_norms else normals


def vertex_normals_mwe(mesh: QuadMesh, face_normals_=None, return_sums: bool = False):
    """Vertex normals as the normalised sum of incident face normals.

    Every incident face contributes with equal weight, so boundary vertices
    simply average their one or two faces.
    """
    if face_normals_ is None:
        face_normals_ = face_normals(mesh.vertices, mesh.faces)
    sums = mesh.incidence @ np.asarray(face_normals_)
    norms = np.linalg.norm(sums, axis=1)
    bad = np.nonzero(norms < DEGENERACY_TOL)[0]
    if len(bad):
        v = int(bad[0])
        raise DegenerateNormal(f"incident face normals cancel at vertex {v}", vertex=v)
    normals = sums / norms[:, None]
    return (normals, sums, norms) if return_sums else normals


def checkerboard_midpoints(mesh: QuadMesh, positions=None) -> np.ndarray:
    """Edge midpoints of every face in winding order, shape (F, 4, 3).

    These are the corners of each face's inscribed (Varignon) parallelogram.
    """
    P = mesh.face_points(positions)
    return 0.5 * (P + np.roll(P, -1, axis=1))


def rest_sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".rest.json")


def save_obj(mesh: QuadMesh, path) -> None:
    path = Path(path)
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += ["f " + " ".join(str(i + 1) for i in face) for face in mesh.faces]
    path.write_text("\n".join(lines) + "\n")
    rest_sidecar_path(path).write_text(json.dumps(mesh.rest_positions.tolist()))


def load_obj(path) -> QuadMesh:
    """Read a quad-only OBJ plus its ``.rest.json`` sidecar.

    Without a sidecar the rest positions default to the x, y coordinates.
    """
    path = Path(path)
    verts, faces = [], []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        try:
            if tag == "v":
                if len(fields) < 3:
                    raise ValueError("vertex needs three coordinates")
                verts.append([float(c) for c in fields[:3]])
            elif tag == "f":
                idx = [int(tok.split("/")[0]) for tok in fields]
                if len(idx) != 4:
                    raise NonQuadFace(f"{path}:{lineno}: face with {len(idx)} vertices")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
        except NonQuadFace:
            raise
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    vertices = np.array(verts, dtype=float).reshape(-1, 3)
    sidecar = rest_sidecar_path(path)
    if sidecar.exists():
        rest = np.array(json.loads(sidecar.read_text()), dtype=float).reshape(-1, 2)
    else:
        rest = vertices[:, :2].copy()
    return QuadMesh(vertices, rest, np.array(faces, dtype=np.int64).reshape(-1, 4))

"""Design generators: rest mesh, per-face strain layout and layer data.

A design stores, for every face, ``[dx, dy, eps_top, eps_bottom]``: the
in-plane mismatch direction and the uniaxial strain of each layer along it.
Designs are written as schema-1 JSON (see :meth:`DesignSpec.to_json`).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadGeometry, BadPitch
from .material import speed_from_strain
from .quadmesh import QuadMesh, grid_mesh

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LayerParams:
    mu: float = 1.0
    thickness: float = 0.5

    def __post_init__(self):
        if self.mu <= 0 or self.thickness <= 0:
            raise ValueError("layer mu and thickness must be positive")


@dataclass
class DesignSpec:
    name: str
    rest_positions: np.ndarray
    faces: np.ndarray
    strain: np.ndarray  # (F, 4): dx, dy, eps_top, eps_bottom
    top: LayerParams = LayerParams()
    bottom: LayerParams = LayerParams()
    targets: str = "finite"  # finite | pure_bending
    element_pitch: float = 1.0
    solver: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rest_positions = np.asarray(self.rest_positions, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.strain = np.asarray(self.strain, dtype=float).reshape(-1, 4)
        if len(self.strain) != len(self.faces):
            raise BadGeometry("strain table must have one row per face")
        norms = np.linalg.norm(self.strain[:, :2], axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise BadGeometry("strain directions must be unit vectors")
        if self.targets not in ("finite", "pure_bending"):
            raise ValueError(f"unknown target model {self.targets!r}")

    @property
    def thickness(self) -> float:
        return self.top.thickness + self.bottom.thickness

    @property
    def directions(self) -> np.ndarray:
        return self.strain[:, :2]

    def mesh(self) -> QuadMesh:
        return QuadMesh.from_rest(self.rest_positions, self.faces)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "geometry": {
                "element_pitch": self.element_pitch,
                "rest_positions": self.rest_positions.tolist(),
                "faces": self.faces.tolist(),
            },
            "layers": {
                "top": {"mu": self.top.mu, "thickness": self.top.thickness},
                "bottom": {"mu": self.bottom.mu, "thickness": self.bottom.thickness},
                "targets": self.targets,
            },
            "strain": self.strain.tolist(),
            "solver": dict(self.solver),
            "meta": dict(self.meta),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "DesignSpec":
        if data.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported design schema {data.get('schema')!r}")
        geo, layers = data["geometry"], data["layers"]
        return cls(
            name=data.get("name", "design"),
            rest_positions=geo["rest_positions"],
            faces=geo["faces"],
            strain=data["strain"],
            top=LayerParams(**layers["top"]),
            bottom=LayerParams(**layers["bottom"]),
            targets=layers.get("targets", "finite"),
            element_pitch=geo.get("element_pitch", 1.0),
            solver=data.get("solver", {}),
            meta=data.get("meta", {}),
        )

    @classmethod
    def from_json(cls, path) -> "DesignSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _divisions(extent: float, pitch: float) -> int:
    if pitch <= 0:
        raise BadPitch("pitch must be positive")
    n = round(extent / pitch)
    if n < 1 or not math.isclose(n * pitch, extent, rel_tol=1e-9, abs_tol=1e-12):
        raise BadPitch(f"pitch {pitch} does not divide {extent}")
    return n


def _equal_layers(thickness: float, mu: float = 1.0):
    half = LayerParams(mu, thickness / 2)
    return half, half


def _strain_rows(directions, delta_eps):
    """Rows with the top layer shrinking by ``|delta_eps|`` and the bottom unstrained."""
    d = np.asarray(directions, dtype=float)
    de = np.broadcast_to(np.abs(np.asarray(delta_eps, dtype=float)), (len(d),))
    return np.column_stack([d, -de, np.zeros(len(d))])


def rect_design(length=50.0, width=10.0, thickness=1.0, pitch=1.0, delta_eps=0.01,
                direction=(1.0, 0.0), targets="pure_bending", mu=1.0) -> DesignSpec:
    nx, ny = _divisions(length, pitch), _divisions(width, pitch)
    mesh = grid_mesh(nx, ny, pitch)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    top, bottom = _equal_layers(thickness, mu)
    params = dict(length=length, width=width, thickness=thickness, pitch=pitch,
                  delta_eps=delta_eps, direction=d.tolist(), targets=targets)
    return DesignSpec(
        "rect", mesh.rest_positions, mesh.faces, _strain_rows(np.tile(d, (mesh.n_faces, 1)), delta_eps),
        top, bottom, targets, pitch, meta={"generator": "rect", "parameters": params},
    )


def finite_strain_rect(eps_top: float, eps_bottom: float, length=50.0, width=10.0, thickness=1.0,
                       pitch=1.0, mu=1.0) -> DesignSpec:
    """Strip with explicit signed layer strains along its long axis."""
    design = rect_design(length, width, thickness, pitch, 0.0, (1.0, 0.0), "finite", mu)
    design.strain[:, 2] = eps_top
    design.strain[:, 3] = eps_bottom
    design.name = "rect_finite"
    design.meta["parameters"].update(eps_top=eps_top, eps_bottom=eps_bottom)
    return design


def flower_design(total_side=40.0, center_side=16.0, thickness=1.0, pitch=1.0, delta_eps=0.03,
                  mu=1.0) -> DesignSpec:
    """Square plate with a strain-free centre and four petals straining toward it.

    The ring outside the centre is split along the plate diagonals; faces
    exactly on a diagonal are assigned so the layout is 90-degree symmetric.
    """
    if not 0 < center_side < total_side:
        raise BadGeometry("centre square must be smaller than the plate")
    n = _divisions(total_side, pitch)
    _divisions(center_side, pitch)
    if (total_side - center_side) / 2 / pitch != round((total_side - center_side) / 2 / pitch):
        raise BadGeometry("petal width must be a whole number of elements")
    half = total_side / 2
    mesh = grid_mesh(n, n, pitch, origin=(-half, -half))
    c = mesh.rest_positions[mesh.faces].mean(axis=1)
    x, y = c[:, 0], c[:, 1]
    inside = (np.abs(x) < center_side / 2) & (np.abs(y) < center_side / 2)
    tie = np.isclose(np.abs(x), np.abs(y))
    along_x = (np.abs(x) > np.abs(y)) | (tie & (x * y > 0))
    d = np.where(along_x[:, None], np.column_stack([-np.sign(x), 0 * x]), np.column_stack([0 * y, -np.sign(y)]))
    strain = _strain_rows(d, delta_eps)
    strain[inside, 2:] = 0.0
    top, bottom = _equal_layers(thickness, mu)
    params = dict(total_side=total_side, center_side=center_side, thickness=thickness, pitch=pitch,
                  delta_eps=delta_eps)
    meta = {"generator": "flower", "parameters": params, "top_speed_mm_min": speed_from_strain(delta_eps)}
    return DesignSpec("flower", mesh.rest_positions, mesh.faces, strain, top, bottom, "finite", pitch, meta=meta)


def grass_design(length=100.0, width=5.0, thickness=1.0, pitch=1.0, gamma_deg=45.0, delta_eps=0.06,
                 mu=1.0) -> DesignSpec:
    """Strip whose mismatch direction makes angle gamma with the long axis."""
    if not 0.0 <= gamma_deg <= 90.0:
        raise BadGeometry("gamma must lie in [0, 90] degrees")
    nx, ny = _divisions(length, pitch), _divisions(width, pitch)
    mesh = grid_mesh(nx, ny, pitch)
    g = math.radians(gamma_deg)
    d = np.tile([math.cos(g), math.sin(g)], (mesh.n_faces, 1))
    top, bottom = _equal_layers(thickness, mu)
    params = dict(length=length, width=width, thickness=thickness, pitch=pitch, gamma_deg=gamma_deg,
                  delta_eps=delta_eps)
    meta = {"generator": "grass", "parameters": params, "top_speed_mm_min": speed_from_strain(delta_eps)}
    return DesignSpec("grass", mesh.rest_positions, mesh.faces, _strain_rows(d, delta_eps), top, bottom,
                      "finite", pitch, meta=meta)


def archimedes_point(alpha, beta, theta_deg, degrees: bool = True):
    """Point on ``r = alpha + beta * theta``.

    With ``degrees=True`` (default) theta enters the radius term in degrees,
    so ``beta = 1/18`` adds 10 mm over a half turn.  The trigonometric
    argument is always the same physical angle.
    """
    theta_deg = np.asarray(theta_deg, dtype=float)
    t = theta_deg if degrees else np.radians(theta_deg)
    r = alpha + beta * t
    ang = np.radians(theta_deg)
    return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1)


def spiral_tangent(point, beta, degrees: bool = True):
    """Unit tangent (increasing theta) of the spiral family through ``point``."""
    p = np.asarray(point, dtype=float)
    r = np.linalg.norm(p, axis=-1)
    ang = np.arctan2(p[..., 1], p[..., 0])
    drdang = beta * (180.0 / np.pi if degrees else 1.0)
    t = np.stack([drdang * np.cos(ang) - r * np.sin(ang), drdang * np.sin(ang) + r * np.cos(ang)], axis=-1)
    return t / np.linalg.norm(t, axis=-1, keepdims=True)


def seashell_design(delta_eps, alpha_in=20.0, alpha_out=30.0, beta=1 / 18, theta_max=180.0, thickness=1.0,
                    pitch=1.0, degrees=True, mu=1.0) -> DesignSpec:
    """Band between two Archimedes spirals, meshed along (theta, alpha).

    Rows follow intermediate spirals and columns follow radial cuts, so the
    rest faces are trapezoids rather than squares.  Strain runs along the
    spiral through each face centre.
    """
    if alpha_out <= alpha_in:
        raise BadGeometry("outer spiral must start outside the inner one")
    if pitch <= 0:
        raise BadPitch("pitch must be positive")
    n_alpha = max(1, round((alpha_out - alpha_in) / pitch))
    mid = archimedes_point(0.5 * (alpha_in + alpha_out), beta, np.linspace(0, theta_max, 2001), degrees)
    arc = np.sum(np.linalg.norm(np.diff(mid, axis=0), axis=1))
    n_theta = max(1, round(arc / pitch))
    alphas = np.linspace(alpha_in, alpha_out, n_alpha + 1)
    thetas = np.linspace(0.0, theta_max, n_theta + 1)
    # theta increases counterclockwise, alpha outward: (theta, alpha) keeps +z winding
    A, T = np.meshgrid(alphas, thetas, indexing="ij")
    rest = archimedes_point(A.ravel(), beta, T.ravel(), degrees)
    idx = np.arange(rest.shape[0]).reshape(n_alpha + 1, n_theta + 1)
    faces = np.stack([idx[1:, :-1].ravel(), idx[1:, 1:].ravel(), idx[:-1, 1:].ravel(), idx[:-1, :-1].ravel()],
                     axis=1)
    quads = rest[faces]
    m = (quads[:, 2, 0] - quads[:, 0, 0]) * (quads[:, 3, 1] - quads[:, 1, 1]) - (
        quads[:, 2, 1] - quads[:, 0, 1]) * (quads[:, 3, 0] - quads[:, 1, 0])
    if np.any(m <= 0):
        faces = faces[:, ::-1]
    centers = rest[faces].mean(axis=1)
    d = spiral_tangent(centers, beta, degrees)
    top, bottom = _equal_layers(thickness, mu)
    params = dict(delta_eps=delta_eps, alpha_in=alpha_in, alpha_out=alpha_out, beta=beta, theta_max=theta_max,
                  thickness=thickness, pitch=pitch, degrees=degrees)
    meta = {"generator": "seashell", "parameters": params, "top_speed_mm_min": speed_from_strain(delta_eps)}
    return DesignSpec("seashell", rest, faces, _strain_rows(d, delta_eps), top, bottom, "finite", pitch, meta=meta)


def rotate_design(design: DesignSpec, quarter_turns: int = 1, center=(0.0, 0.0)) -> DesignSpec:
    """Exact multiple-of-90-degree rotation of rest positions and strain field."""
    def rot(p):
        p = np.array(p, dtype=float)
        for _ in range(quarter_turns % 4):
            p = np.column_stack([-p[:, 1], p[:, 0]])
        return p

    c = np.asarray(center, dtype=float)
    strain = design.strain.copy()
    strain[:, :2] = rot(strain[:, :2])
    return DesignSpec(design.name, rot(design.rest_positions - c) + c, design.faces.copy(), strain, design.top,
                      design.bottom, design.targets, design.element_pitch, dict(design.solver),
                      dict(design.meta))


GENERATORS = {
    "rect": rect_design,
    "flower": flower_design,
    "grass": grass_design,
    "seashell": seashell_design,
}

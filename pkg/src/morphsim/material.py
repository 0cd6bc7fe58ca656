"""Bilayer material model: target fundamental forms and energy weights.

Layer 1 and layer 2 follow the ordering of the bilayer energy: ``B`` grows
with ``eps2 - eps1``.  With the surface normal pointing from the bottom
layer to the top layer, layer 1 is the bottom layer (see
:func:`morphsim.simulate.design_targets`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeSpeed

I2 = np.eye(2)

# print-speed calibration, bottom layer printed at 300 mm/min
SPEED_INTERCEPT = 3.593e-2
SPEED_SLOPE = 1.013e-4  # per (mm/min)
BOTTOM_SPEED = 300.0


@dataclass(frozen=True)
class LayerSpec:
    mu: float
    thickness: float
    strain: np.ndarray  # (2, 2) or (F, 2, 2)

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")
        strain = np.asarray(self.strain, dtype=float)
        if strain.shape[-2:] != (2, 2):
            raise ValueError(f"strain must end in (2, 2), got {strain.shape}")
        if not np.allclose(strain, np.swapaxes(strain, -1, -2), atol=1e-14):
            raise ValueError("strain tensor must be symmetric")
        object.__setattr__(self, "strain", strain)


@dataclass(frozen=True)
class TargetForms:
    """Per-face targets ``A``, ``B`` (F, 2, 2) and scalar weights.

    ``A_bar``/``B_bar`` are the same targets expressed in each face's
    unit-square frame; they are filled in by :meth:`in_face_frames`.
    """

    A: np.ndarray
    B: np.ndarray
    w_first: float
    w_second: float
    A_bar: np.ndarray | None = None
    B_bar: np.ndarray | None = None

    def in_face_frames(self, J) -> "TargetForms":
        A_bar, B_bar = face_targets(self.A, self.B, J)
        return TargetForms(self.A, self.B, self.w_first, self.w_second, A_bar, B_bar)


def uniaxial_strain(eps, direction) -> np.ndarray:
    """``eps * d d^T`` for scalar(s) ``eps`` and unit direction(s) ``d``."""
    d = np.asarray(direction, dtype=float)
    eps = np.asarray(eps, dtype=float)
    return eps[..., None, None] * np.einsum("...i,...j->...ij", d, d)


def energy_weights(mu1, t1, mu2, t2):
    w_first = (mu1 * t1 + mu2 * t2) / 4.0
    w_second = (mu1 * t1 * (3 * t2**2 + t1**2) + mu2 * t2 * (3 * t1**2 + t2**2)) / 12.0
    return w_first, w_second


def target_forms(layer1: LayerSpec, layer2: LayerSpec) -> TargetForms:
    """Finite-strain targets; no small-strain truncation is applied."""
    mu1, t1, e1 = layer1.mu, layer1.thickness, layer1.strain
    mu2, t2, e2 = layer2.mu, layer2.thickness, layer2.strain
    e1, e2 = np.broadcast_arrays(e1, e2)
    G1 = I2 + e1
    G2 = I2 + e2
    A = (mu1 * t1 * G1 @ G1 + mu2 * t2 * G2 @ G2) / (mu1 * t1 + mu2 * t2)
    numer = 3 * t1 * t2 * (mu2 * (e2 @ e2) + 2 * mu2 * e2 - mu1 * (e1 @ e1) - 2 * mu1 * e1)
    denom = mu1 * t1 * (3 * t2**2 + t1**2) + mu2 * t2 * (3 * t1**2 + t2**2)
    w_first, w_second = energy_weights(mu1, t1, mu2, t2)
    return TargetForms(A, numer / denom, w_first, w_second)


def pure_bending_targets(delta_eps, t: float, mu: float = 1.0, direction=(1.0, 0.0)) -> TargetForms:
    """Small-strain targets: unstretched metric and uniaxial curvature 3*de/(2t).

    The bending weight is ``mu t^3 / 4`` here, not the equal-layer value of
    :func:`energy_weights`.
    """
    if t <= 0:
        raise ValueError("thickness must be positive")
    d = np.asarray(direction, dtype=float)
    de = np.asarray(delta_eps, dtype=float)
    B = uniaxial_strain(1.5 * de / t, d)
    A = np.broadcast_to(I2, B.shape).copy()
    return TargetForms(A, B, mu * t / 4.0, mu * t**3 / 4.0)


def face_targets(A, B, J):
    """Targets in the unit-square frame: ``J^T A J`` and ``J^T B J``."""
    J = np.asarray(J, dtype=float)
    Jt = np.swapaxes(J, -1, -2)
    return Jt @ np.asarray(A) @ J, Jt @ np.asarray(B) @ J


def strain_from_speed(v_top: float) -> float:
    """Magnitude of the layer strain difference for a top-layer print speed (mm/min)."""
    if v_top <= 0:
        raise NegativeSpeed(f"print speed must be positive, got {v_top}")
    return abs(SPEED_INTERCEPT - SPEED_SLOPE * v_top)


def speed_from_strain(delta_eps: float) -> float:
    """Top-layer speed giving a (top-shrinks-more) strain difference ``delta_eps``."""
    return (SPEED_INTERCEPT + abs(delta_eps)) / SPEED_SLOPE

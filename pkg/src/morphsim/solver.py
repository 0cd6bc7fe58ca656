"""Levenberg-Marquardt minimisation of ``F(x) = 1/2 |f(x)|^2``.

The damping schedule is the gain-ratio update of Nielsen (as laid out in
Madsen, Nielsen & Tingleff's least-squares notes).  The damped normal
equations are solved with a sparse Cholesky factorisation when CHOLMOD is
available (``scikit-sparse``) and with SuperLU otherwise.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FactorizationFailure, LinearSolveFailure, NonFiniteResidual

try:  # optional fast path
    from sksparse.cholmod import CholmodError, analyze as _cholmod_analyze
except ImportError:  # pragma: no cover - depends on the environment
    _cholmod_analyze = None
    CholmodError = Exception

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    tau: float = 1e-3
    eps1: float = 1e-8
    eps2: float = 1e-8
    k_max: int = 1000
    perturb_amplitude: float | None = None  # mm; None -> 1e-4 x element pitch
    seed: int = 0
    max_damping_retries: int = 10
    linear_solver: str = "auto"  # auto | cholmod | splu

    def __post_init__(self):
        if self.tau <= 0 or self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("tau, eps1 and eps2 must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.perturb_amplitude is not None and self.perturb_amplitude < 0:
            raise ValueError("perturb_amplitude must be non-negative")

    def replace(self, **changes) -> "SolverConfig":
        values = asdict(self)
        values.update({k: v for k, v in changes.items() if v is not None})
        return SolverConfig(**values)


@dataclass
class SolverReport:
    iterations: int
    accepted: int
    gradient_norm: float
    energy_history: list[float]
    termination: str  # gradient | step | max-iters
    wall_time: float
    seed: int | None = None
    damping_history: list[float] = field(default_factory=list)

    @property
    def final_energy(self) -> float:
        return self.energy_history[-1]

    def to_dict(self) -> dict:
        return asdict(self)


class DampedNormalSolver:
    """Solves ``(A + mu I) h = -g`` and reuses the symbolic analysis when it can."""

    def __init__(self, method: str = "auto"):
        if method == "auto":
            method = "cholmod" if _cholmod_analyze is not None else "splu"
        if method == "cholmod" and _cholmod_analyze is None:
            raise ValueError("cholmod requested but scikit-sparse is not installed")
        self.method = method
        self._symbolic = None
        self._pattern = None

    def _factor(self, M):
        if self.method == "cholmod":
            pattern = (M.shape, M.indptr.tobytes(), M.indices.tobytes())
            try:
                if self._symbolic is None or pattern != self._pattern:
                    self._symbolic = _cholmod_analyze(M, mode="auto")
                    self._pattern = pattern
                factor = self._symbolic.cholesky(M)
            except CholmodError as exc:
                raise FactorizationFailure(str(exc)) from exc
            return factor
        try:
            lu = spla.splu(M.tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise FactorizationFailure(str(exc)) from exc
        return lu.solve

    def __call__(self, A, mu: float, g, tol: float = RESIDUAL_TOL, refinements: int = 3) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if mu < 0:
            raise ValueError("damping must be non-negative")
        M = (sp.csc_matrix(A) + mu * sp.identity(A.shape[0], format="csc")).tocsc()
        M.sort_indices()
        solve = self._factor(M)
        gnorm = np.linalg.norm(g)
        if gnorm == 0:
            return np.zeros_like(g)
        h = solve(-g)
        for _ in range(refinements + 1):
            if not np.all(np.isfinite(h)):
                raise FactorizationFailure("non-finite step from factorisation")
            resid = -g - M @ h
            if np.linalg.norm(resid) <= tol * gnorm:
                return h
            h = h + solve(resid)
        raise FactorizationFailure(
            f"relative residual {np.linalg.norm(-g - M @ h) / gnorm:.2e} above {tol:.0e}"
        )


def solve_damped_normal_equations(A, mu: float, g, method: str = "auto") -> np.ndarray:
    """Step ``h`` with ``(A + mu I) h = -g``; ``A`` sparse and symmetric."""
    return DampedNormalSolver(method)(A, mu, g)


def _evaluate(fun, x):
    r, J = fun(x)
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidual("residual vector contains non-finite entries")
    return r, sp.csr_matrix(J)


def lm_minimize(fun, x0, config: SolverConfig = SolverConfig(), callback=None):
    """Minimise ``1/2 |r(x)|^2`` where ``fun(x) -> (r, J)``.

    Returns ``(x, report)``.  ``report.energy_history`` records ``|r|^2`` at
    the start and after every accepted step.
    """
    start = time.perf_counter()
    linear = DampedNormalSolver(config.linear_solver)
    x = np.array(x0, dtype=float)
    r, J = _evaluate(fun, x)
    A = (J.T @ J).tocsc()
    g = J.T @ r
    F = 0.5 * r @ r
    nu = 2.0
    mu = config.tau * A.diagonal().max()
    history = [2 * F]
    damping = [mu]
    k = accepted = 0
    found = np.linalg.norm(g, np.inf) <= config.eps1
    termination = "gradient" if found else "max-iters"

    while not found and k < config.k_max:
        k += 1
        h = None
        for _ in range(config.max_damping_retries + 1):
            try:
                h = linear(A, mu, g)
                break
            except FactorizationFailure as exc:
                log.debug("factorisation failed at mu=%.3e: %s", mu, exc)
                mu *= nu
                nu *= 2
        if h is None:
            raise LinearSolveFailure(f"damped system unsolvable after {config.max_damping_retries} retries")

        if np.linalg.norm(h) <= config.eps2 * (np.linalg.norm(x) + config.eps2):
            found = True
            termination = "step"
            break

        x_new = x + h
        predicted = 0.5 * h @ (mu * h - g)
        try:
            r_new, J_new = _evaluate(fun, x_new)
            F_new = 0.5 * r_new @ r_new
        except (NonFiniteResidual, ArithmeticError, ValueError) as exc:
            log.debug("trial step rejected: %s", exc)
            F_new = np.inf
        rho = (F - F_new) / predicted if predicted > 0 else -1.0

        if rho > 0 and np.isfinite(F_new):
            x, r, J, F = x_new, r_new, J_new, F_new
            A = (J.T @ J).tocsc()
            g = J.T @ r
            accepted += 1
            history.append(2 * F)
            found = np.linalg.norm(g, np.inf) <= config.eps1
            if found:
                termination = "gradient"
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2.0
        damping.append(mu)
        if callback is not None:
            callback(k, x, 2 * F, mu)

    report = SolverReport(
        iterations=k,
        accepted=accepted,
        gradient_norm=float(np.linalg.norm(g, np.inf)),
        energy_history=[float(e) for e in history],
        termination=termination,
        wall_time=time.perf_counter() - start,
        seed=config.seed,
        damping_history=[float(m) for m in damping],
    )
    return x, report


def element_pitch(mesh) -> float:
    """Mean rest edge length, used to scale the default perturbation."""
    e = mesh.edges
    return float(np.mean(np.linalg.norm(mesh.rest_positions[e[:, 0]] - mesh.rest_positions[e[:, 1]], axis=1)))


def initialize(mesh, config: SolverConfig = SolverConfig()) -> np.ndarray:
    """Flat rest embedding plus a seeded out-of-plane perturbation."""
    amp = config.perturb_amplitude
    if amp is None:
        amp = 1e-4 * element_pitch(mesh)
    x0 = np.column_stack([mesh.rest_positions, np.zeros(mesh.n_vertices)])
    if amp > 0:
        rng = np.random.default_rng(config.seed)
        x0[:, 2] += amp * rng.uniform(-1.0, 1.0, size=mesh.n_vertices)
    return x0.ravel()

"""Post-processing: rigid alignment, circle and helix fits, table reproduction."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import FitFailure, MorphError

log = logging.getLogger(__name__)

CSV_HEADER = ["case", "param", "paper_value_mm", "simulated_mm", "rel_dev", "iters", "seconds"]


def rigid_align(points, reference, weights=None):
    """Least-squares rotation + translation of ``points`` onto ``reference``.

    ``reference`` may be 2D (taken at z = 0).  Returns ``(aligned, R, t)``
    with ``aligned = points @ R.T + t``.
    """
    P = np.asarray(points, dtype=float)
    Q = np.asarray(reference, dtype=float)
    if Q.shape[1] == 2:
        Q = np.column_stack([Q, np.zeros(len(Q))])
    if P.shape != Q.shape:
        raise ValueError("point sets must have equal size")
    w = np.ones(len(P)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    pc = w @ P
    qc = w @ Q
    H = (P - pc).T @ ((Q - qc) * w[:, None])
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    t = qc - R @ pc
    return P @ R.T + t, R, t


@dataclass
class CircleFit:
    center: np.ndarray
    normal: np.ndarray
    radius: float
    rms: float


def fit_circle_3d(points, collinear_tol: float = 1e-7) -> CircleFit:
    """Algebraic (Kasa) circle fit in the best-fit plane, then one geometric
    Gauss-Newton step on (centre, radius)."""
    P = np.asarray(points, dtype=float)
    if len(P) < 3:
        raise FitFailure("need at least three points")
    c0 = P.mean(axis=0)
    _, s, Vt = np.linalg.svd(P - c0)
    if s[1] <= collinear_tol * s[0]:
        raise FitFailure("points are collinear")
    e1, e2, normal = Vt
    q = np.column_stack([(P - c0) @ e1, (P - c0) @ e2])
    M = np.column_stack([2 * q, np.ones(len(q))])
    a, b, c = np.linalg.lstsq(M, (q**2).sum(axis=1), rcond=None)[0]
    r = math.sqrt(max(c + a * a + b * b, 0.0))
    diff = q - [a, b]
    dist = np.linalg.norm(diff, axis=1)
    Jg = np.column_stack([-diff[:, 0] / dist, -diff[:, 1] / dist, -np.ones(len(q))])
    step = np.linalg.lstsq(Jg, -(dist - r), rcond=None)[0]
    a, b, r = a + step[0], b + step[1], r + step[2]
    rms = float(np.sqrt(np.mean((np.linalg.norm(q - [a, b], axis=1) - r) ** 2)))
    return CircleFit(c0 + a * e1 + b * e2, normal, float(r), rms)


def midline_chain(rest_positions, positions, direction=(1.0, 0.0), tol: float = 1e-6):
    """Vertices on the central row running along ``direction``, ordered along it.

    With an even number of rows the two central rows are averaged.
    Returns ``(points, indices)``; indices has one or two rows.
    """
    rest = np.asarray(rest_positions, dtype=float)
    X = np.asarray(positions, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    along = rest @ d
    across = rest @ np.array([-d[1], d[0]])
    scale = max(np.ptp(across), np.ptp(along), 1.0)
    keys = np.round(across / (tol * scale)).astype(np.int64)
    rows = np.unique(keys)
    picks = [rows[len(rows) // 2]] if len(rows) % 2 else [rows[len(rows) // 2 - 1], rows[len(rows) // 2]]
    chains = []
    for key in picks:
        idx = np.nonzero(keys == key)[0]
        chains.append(idx[np.argsort(along[idx])])
    if len(chains) == 2 and (len(chains[0]) != len(chains[1]) or
                             not np.allclose(along[chains[0]], along[chains[1]], atol=tol * scale)):
        raise FitFailure("central rows are not aligned; mesh is not a structured strip")
    pts = np.mean([X[c] for c in chains], axis=0)
    return pts, np.array(chains)


@dataclass
class BendReport:
    radius: float
    rms: float
    theoretical_radius: float
    relative_deviation: float
    concave_side: str  # "top" (normal side) or "bottom"; "flat" when collinear
    collinear: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def theoretical_radius(thickness: float, delta_eps: float) -> float:
    return math.inf if delta_eps == 0 else 2 * thickness / (3 * abs(delta_eps))


def fit_bend_radius(mesh, direction=(1.0, 0.0), thickness: float = 1.0, delta_eps: float = 0.0) -> BendReport:
    """Radius of the strip's mid-line after bending along ``direction``."""
    from .quadmesh import vertex_normals_mwe

    pts, chains = midline_chain(mesh.rest_positions, mesh.vertices, direction)
    theory = theoretical_radius(thickness, delta_eps)
    try:
        fit = fit_circle_3d(pts)
    except FitFailure:
        dev = 0.0 if math.isinf(theory) else math.inf
        return BendReport(math.inf, 0.0, theory, dev, "flat", collinear=True)
    # the centre lies on the normal side of every chain point when the top is concave
    normals = vertex_normals_mwe(mesh)[chains].mean(axis=0)
    side = "top" if np.mean(np.einsum("ij,ij->i", fit.center - pts, normals)) > 0 else "bottom"
    dev = abs(fit.radius - theory) / theory if math.isfinite(theory) else math.inf
    return BendReport(fit.radius, fit.rms, theory, dev, side)


@dataclass
class HelixFit:
    radius: float
    pitch: float
    handedness: int
    axis: np.ndarray
    rms: float


def _perp_basis(a):
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(a, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(a, e1)


def fit_helix(points) -> HelixFit:
    """Least-squares circular helix through an ordered point chain.

    On checkerboard meshes every other mid-line vertex can sit on the chord
    between its neighbours. The even and odd sub-chains are then fitted
    separately, and their mean replaces the full fit when both fit better.
    """
    P = np.asarray(points, dtype=float)
    if len(P) < 5:
        raise FitFailure("need at least five points")
    fits, failure = {}, None
    for key, chain in (("all", P), ("even", P[::2]), ("odd", P[1::2])):
        if key != "all" and len(P) < 12:
            break
        try:
            fits[key] = _fit_helix_chain(chain)
        except FitFailure as exc:
            failure = failure or exc
    if "even" in fits and "odd" in fits:
        even, odd = fits["even"], fits["odd"]
        if "all" not in fits or max(even.rms, odd.rms) < fits["all"].rms:
            # kink and chord vertices sit on two coaxial helices; report the mean one
            best = min(even, odd, key=lambda f: f.rms)
            return HelixFit(0.5 * (even.radius + odd.radius), 0.5 * (even.pitch + odd.pitch), best.handedness,
                            best.axis, max(even.rms, odd.rms))
    if "all" not in fits:
        raise failure
    return fits["all"]


def _fit_helix_chain(P) -> HelixFit:
    d2 = P[2:] - 2 * P[1:-1] + P[:-2]
    # lag-2 products keep the axis estimate alive when every other d2 vanishes
    cr = np.concatenate([np.cross(d2[:-1], d2[1:]), np.cross(d2[:-2], d2[2:])])
    ref = cr[np.argmax(np.linalg.norm(cr, axis=1))]
    cr *= np.where(cr @ ref < 0, -1.0, 1.0)[:, None]
    a0 = cr.sum(axis=0)
    if np.linalg.norm(a0) < 1e-12 * max(np.ptp(P), 1.0) ** 2:
        raise FitFailure("chain is straight; no helix axis")
    a0 /= np.linalg.norm(a0)
    u1, u2 = _perp_basis(a0)

    def frame(params):
        a = a0 + params[0] * u1 + params[1] * u2
        a /= np.linalg.norm(a)
        e1, e2 = _perp_basis(a)
        return a, e1, e2

    def circle_residuals(params):
        a, e1, e2 = frame(params)
        q = np.column_stack([P @ e1, P @ e2])
        return np.linalg.norm(q - params[2:4], axis=1) - params[4]

    a, e1, e2 = frame(np.zeros(2))
    q = np.column_stack([P @ e1, P @ e2])
    M = np.column_stack([2 * q, np.ones(len(q))])
    cx, cy, c = np.linalg.lstsq(M, (q**2).sum(axis=1), rcond=None)[0]
    r0 = math.sqrt(max(c + cx * cx + cy * cy, 1e-300))
    sol = least_squares(circle_residuals, [0.0, 0.0, cx, cy, r0], x_scale="jac")
    a, e1, e2 = frame(sol.x)
    center = sol.x[2:4]
    q = np.column_stack([P @ e1, P @ e2]) - center
    phi = np.unwrap(np.arctan2(q[:, 1], q[:, 0]))
    z = P @ a
    slope, intercept = np.polyfit(phi, z, 1)
    axial = z - (slope * phi + intercept)
    rms = float(np.sqrt(np.mean(sol.fun**2 + axial**2)))
    return HelixFit(abs(float(sol.x[4])), 2 * math.pi * abs(float(slope)), int(np.sign(slope)) or 1, a, rms)


def helix_metrics(mesh, direction=None):
    """``(radius, pitch, handedness)`` of a strip's mid-line."""
    if direction is None:
        ext = np.ptp(mesh.rest_positions, axis=0)
        direction = (1.0, 0.0) if ext[0] >= ext[1] else (0.0, 1.0)
    pts, _ = midline_chain(mesh.rest_positions, mesh.vertices, direction)
    fit = fit_helix(pts)
    return fit.radius, fit.pitch, fit.handedness


# table reproduction -----------------------------------------------------

TABLE1 = {"deps": [0.01, 0.02, 0.03, 0.04, 0.05], "reference": [66.67, 33.33, 22.22, 16.67, 13.33]}
TABLE2 = {
    2.0: [66.67, 33.34, 22.24, 16.68, 13.35],
    1.0: [66.67, 33.33, 22.22, 16.67, 13.33],
    0.5: [66.67, 33.33, 22.22, 16.67, 13.33],
}
TABLE3 = [((0.2, 0.3), 6.96), ((0.1, 0.2), 6.79), ((0.0, 0.1), 6.70),
          ((-0.1, 0.0), 6.70), ((-0.2, -0.1), 6.90), ((-0.3, -0.2), 7.53)]
TOLERANCE = {1: 0.01, 2: 0.002, 3: 0.05}
SMALL_STRAIN_RADIUS = 2 * 1.0 / (3 * 0.1)


def table_cases(table: int):
    """Case dictionaries for one table."""
    cases = []
    if table == 1:
        for de, ref in zip(TABLE1["deps"], TABLE1["reference"]):
            cases.append(dict(table=1, param=f"deps={de:g}", reference=ref, pitch=1.0, deps=de))
    elif table == 2:
        for pitch, refs in TABLE2.items():
            for de, ref in zip(TABLE1["deps"], refs):
                cases.append(dict(table=2, param=f"pitch={pitch:g};deps={de:g}", reference=ref, pitch=pitch, deps=de))
    elif table == 3:
        for (top, bottom), ref in TABLE3:
            cases.append(dict(table=3, param=f"top={top:g};bottom={bottom:g}", reference=ref, pitch=1.0,
                              eps_top=top, eps_bottom=bottom))
    else:
        raise ValueError(f"unknown table {table}")
    return cases


def run_case(case: dict, config=None) -> dict:
    from .designs import finite_strain_rect, rect_design
    from .simulate import simulate, solver_config

    start = time.perf_counter()
    row = dict(case=f"table{case['table']}", param=case["param"], paper_value_mm=case["reference"],
               simulated_mm=math.nan, rel_dev=math.nan, iters=0, seconds=0.0)
    try:
        if case["table"] == 3:
            design = finite_strain_rect(case["eps_top"], case["eps_bottom"], pitch=case["pitch"])
            deps = case["eps_bottom"] - case["eps_top"]
        else:
            design = rect_design(pitch=case["pitch"], delta_eps=case["deps"])
            deps = case["deps"]
        result = simulate(design, solver_config(design, config))
        bend = fit_bend_radius(result.mesh, (1.0, 0.0), design.thickness, deps)
        row.update(simulated_mm=bend.radius, rel_dev=abs(bend.radius - case["reference"]) / case["reference"],
                   iters=result.report.iterations, theory_mm=bend.theoretical_radius,
                   theory_dev=bend.relative_deviation, concave_side=bend.concave_side,
                   report=result.report.to_dict())
    except MorphError as exc:
        log.error("%s %s failed: %s", row["case"], row["param"], exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["seconds"] = time.perf_counter() - start
    return row


def _worker_count() -> int:
    try:
        cap = int(os.environ.get("MORPHSIM_THREADS", "1"))
    except ValueError:
        cap = 1
    return max(1, min(cap, os.cpu_count() or 1))


def verify_tables(tables=(1, 2, 3), config=None, workers: int | None = None) -> list[dict]:
    """Run every case of the requested tables; rows come back in case order."""
    cases = [c for t in tables for c in table_cases(t)]
    workers = workers or _worker_count()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(run_case, cases, [config] * len(cases)))
    else:
        rows = [run_case(c, config) for c in cases]
    return rows


def check_rows(rows: list[dict]) -> list[str]:
    """Descriptions of every row (or group) outside its acceptance tolerance."""
    problems = []
    for row in rows:
        table = int(row["case"][-1])
        if "error" in row:
            problems.append(f"{row['case']} {row['param']}: {row['error']}")
            continue
        if table in (1, 2):
            if not row["theory_dev"] <= TOLERANCE[table]:
                problems.append(f"{row['case']} {row['param']}: {row['theory_dev']:.3%} from theory")
        else:
            if not row["rel_dev"] <= TOLERANCE[3]:
                problems.append(f"{row['case']} {row['param']}: {row['rel_dev']:.2%} from reference value")
            if not row["simulated_mm"] >= SMALL_STRAIN_RADIUS - 5e-3:
                problems.append(f"{row['case']} {row['param']}: radius below small-strain value")
    t2 = [r for r in rows if r["case"] == "table2" and "error" not in r]
    by_deps: dict[str, dict[float, float]] = {}
    for r in t2:
        pitch, deps = (float(kv.split("=")[1]) for kv in r["param"].split(";"))
        by_deps.setdefault(f"{deps:g}", {})[pitch] = abs(r["simulated_mm"] - r["theory_mm"])
    for deps, errs in by_deps.items():
        seq = [errs[p] for p in sorted(errs, reverse=True)]
        if any(b > a for a, b in zip(seq, seq[1:])):
            problems.append(f"table2 deps={deps}: error not non-increasing under refinement {seq}")
    return problems


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r["case"], r["param"], f"{r['paper_value_mm']:.2f}", f"{r['simulated_mm']:.6f}",
                         f"{r['rel_dev']:.6f}", r["iters"], f"{r['seconds']:.3f}"])
    return buf.getvalue()


def rows_to_json(rows) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, np.ndarray):
            return v.tolist()
        return v

    return json.dumps([{k: clean(v) for k, v in r.items()} for r in rows], indent=1, default=clean)

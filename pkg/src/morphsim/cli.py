"""Command line: ``morphsim gen | simulate | verify``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 acceptance failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, designs
from .errors import (DegenerateAngle, DegenerateFace, DegenerateNormal, FitFailure, MorphError,
                     SingularJacobian, SolverError)
from .material import speed_from_strain
from .quadmesh import save_obj
from .simulate import simulate, solver_config

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3

log = logging.getLogger("morphsim")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; we reserve 2 for numerical failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="morphsim", description="Bilayer self-morphing simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="write a design file")
    gen.add_argument("kind", choices=sorted(designs.GENERATORS))
    gen.add_argument("-o", "--out", default=None, help="output JSON (default <kind>.json)")
    gen.add_argument("--len", dest="length", type=_positive, help="strip length mm (rect 50, grass 100)")
    gen.add_argument("--wid", dest="width", type=_positive, help="strip width mm (rect 10, grass 5)")
    gen.add_argument("--t", dest="thickness", type=_positive, default=1.0, help="total thickness mm")
    gen.add_argument("--pitch", type=_positive, default=1.0, help="element pitch mm")
    gen.add_argument("--deps", type=float, default=None,
                     help="strain mismatch (rect 0.01, flower 0.03, grass 0.06; required for seashell)")
    gen.add_argument("--speed", type=_positive, default=None,
                     help="top-layer print speed mm/min; sets --deps from the calibration")
    gen.add_argument("--gamma", type=float, default=45.0, help="grass strain angle, degrees")
    gen.add_argument("--dir", type=float, default=0.0, help="rect strain angle, degrees")
    gen.add_argument("--targets", choices=["pure_bending", "finite"], default="pure_bending",
                     help="rect target model")
    gen.add_argument("--side", type=_positive, default=40.0, help="flower plate side mm")
    gen.add_argument("--center", type=_positive, default=16.0, help="flower centre side mm")
    gen.add_argument("--alpha-in", type=float, default=20.0, help="seashell inner spiral offset mm")
    gen.add_argument("--alpha-out", type=float, default=30.0, help="seashell outer spiral offset mm")
    gen.add_argument("--beta", type=float, default=1 / 18,
                     help="seashell spiral growth, mm per degree (theta enters r = alpha + beta*theta in degrees)")
    gen.add_argument("--theta-max", type=float, default=180.0, help="seashell sweep, degrees")

    simp = sub.add_parser("simulate", help="solve a design for its equilibrium shape")
    simp.add_argument("design", type=Path)
    simp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    simp.add_argument("--tau", type=_positive)
    simp.add_argument("--eps1", type=_positive)
    simp.add_argument("--eps2", type=_positive)
    simp.add_argument("--k-max", type=int)
    simp.add_argument("--seed", type=int)
    simp.add_argument("--perturb", type=float, help="initial out-of-plane perturbation amplitude mm")
    simp.add_argument("--no-obj", action="store_true")
    simp.add_argument("--no-energy", action="store_true")

    ver = sub.add_parser("verify", help="reproduce a radius table")
    ver.add_argument("table", type=int, choices=[1, 2, 3])
    ver.add_argument("--out", type=Path, default=None, help="directory for table<N>.csv/.json")
    ver.add_argument("--seed", type=int)
    ver.add_argument("--k-max", type=int)
    ver.add_argument("--workers", type=int, default=None, help="parallel rows (capped by MORPHSIM_THREADS)")
    return parser


def _deps(args, default):
    if args.speed is not None:
        return 3.593e-2 - 1.013e-4 * args.speed
    return default if args.deps is None else args.deps


def cmd_gen(args) -> int:
    kind = args.kind
    if kind == "rect":
        de = _deps(args, 0.01)
        ang = math.radians(args.dir)
        design = designs.rect_design(args.length or 50.0, args.width or 10.0, args.thickness, args.pitch, de,
                                     (math.cos(ang), math.sin(ang)), args.targets)
    elif kind == "flower":
        de = _deps(args, 0.03)
        design = designs.flower_design(args.side, args.center, args.thickness, args.pitch, de)
    elif kind == "grass":
        de = _deps(args, 0.06)
        design = designs.grass_design(args.length or 100.0, args.width or 5.0, args.thickness, args.pitch,
                                      args.gamma, de)
    else:
        if args.deps is None and args.speed is None:
            raise ValueError("seashell needs --deps or --speed (no default mismatch)")
        de = _deps(args, None)
        design = designs.seashell_design(de, args.alpha_in, args.alpha_out, args.beta, args.theta_max,
                                         args.thickness, args.pitch)
    out = Path(args.out or f"{kind}.json")
    design.to_json(out)
    print(f"wrote {out}: {design.mesh().n_faces} faces, {len(design.rest_positions)} vertices")
    print(f"delta_eps = {de:g}, top-layer print speed = {speed_from_strain(de):.0f} mm/min")
    return EXIT_OK


def _bend_summary(result):
    design = result.design
    params = design.meta.get("parameters", {})
    if design.meta.get("generator") != "rect":
        return None
    d = params.get("direction", [1.0, 0.0])
    de = float(np.median(design.strain[:, 3] - design.strain[:, 2]))
    try:
        return analysis.fit_bend_radius(result.mesh, d, design.thickness, de).to_dict()
    except MorphError as exc:
        return {"error": str(exc)}


def _helix_summary(result):
    if result.design.meta.get("generator") != "grass":
        return None
    try:
        r, p, h = analysis.helix_metrics(result.mesh)
        return {"radius": r, "pitch": p, "handedness": h}
    except MorphError as exc:
        return {"error": str(exc)}


def cmd_simulate(args) -> int:
    design = designs.DesignSpec.from_json(args.design)
    config = solver_config(design, tau=args.tau, eps1=args.eps1, eps2=args.eps2, k_max=args.k_max,
                           seed=args.seed, perturb_amplitude=args.perturb)
    result = simulate(design, config)
    args.out.mkdir(parents=True, exist_ok=True)
    if not args.no_obj:
        save_obj(result.mesh, args.out / "out.obj")
    report = {"design": design.name, "seed": config.seed, "config": dict(config.__dict__),
              "solver": result.report.to_dict()}
    bend = _bend_summary(result)
    if bend is not None:
        report["bend"] = bend
    helix = _helix_summary(result)
    if helix is not None:
        report["helix"] = helix
    (args.out / "report.json").write_text(json.dumps(report, indent=1, default=_json_default))
    if not args.no_energy:
        with open(args.out / "energy.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "energy"])
            for i, e in enumerate(result.report.energy_history):
                writer.writerow([i, repr(e)])
    rep = result.report
    print(f"{design.name}: {rep.iterations} iterations ({rep.termination}), energy {rep.final_energy:.6e}, "
          f"seed {config.seed}")
    if bend and "radius" in bend:
        print(f"bend radius {bend['radius']:.4f} mm (theory {bend['theoretical_radius']:.4f} mm)")
    if helix and "pitch" in helix:
        print(f"helix radius {helix['radius']:.3f} mm, pitch {helix['pitch']:.3f} mm, "
              f"handedness {helix['handedness']:+d}")
    return EXIT_OK


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def cmd_verify(args) -> int:
    from .solver import SolverConfig

    config = SolverConfig().replace(seed=args.seed, k_max=args.k_max)
    rows = analysis.verify_tables((args.table,), config, workers=args.workers)
    text = analysis.rows_to_csv(rows)
    sys.stdout.write(text)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"table{args.table}.csv").write_text(text)
        (args.out / f"table{args.table}.json").write_text(analysis.rows_to_json(rows))
    problems = analysis.check_rows(rows)
    if any("error" in r for r in rows) and all("error" in r for r in rows):
        for p in problems:
            print(f"FAIL {p}", file=sys.stderr)
        return EXIT_NUMERICAL
    if problems:
        for p in problems:
            print(f"FAIL {p}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    print(f"table {args.table}: all {len(rows)} rows within tolerance", file=sys.stderr)
    return EXIT_OK


# errors raised while iterating; bad inputs (parse, pitch, geometry) count as usage errors
NUMERICAL_ERRORS = (SolverError, DegenerateFace, DegenerateNormal, DegenerateAngle, SingularJacobian, FitFailure)


def _where(exc) -> str:
    parts = [f"{k} {getattr(exc, k)}" for k in ("face", "vertex") if getattr(exc, k, None) is not None]
    return f" ({', '.join(parts)})" if parts else ""


COMMANDS = {"gen": cmd_gen, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}{_where(exc)}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (MorphError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

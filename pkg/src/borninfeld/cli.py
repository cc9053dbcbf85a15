"""Command-line entry point: one subcommand per workflow, deterministic CSV/JSON
artifacts plus a run manifest.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.  Errors are
reported as a JSON object on stderr and no artifacts are written.
"""

import argparse
import csv
import hashlib
import io
import json
import os
import platform
import sys
import time
from dataclasses import asdict

import numpy as np
import scipy
import sympy

from . import __version__, charge, fields, gronwall, minimizer, plap, radial, verify
from .errors import (BornInfeldError, ConstraintViolation, ConvergenceError,
                     DivergentIntegralError, HypothesisError, ValidationError)

MANIFEST_VERSION = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


# -- serialization -------------------------------------------------------------------
def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj):
    return (json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n").encode()


def dump_csv(header, rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue().encode()


# -- helpers --------------------------------------------------------------------------
def _radial_density(args):
    N = args.dim
    if args.family == "power":
        amp = args.amplitude if args.amplitude is not None else N - 1 - args.beta
        return charge.PowerDatum(N, amp, args.beta, r0=args.r0, core=args.core, taper=args.taper)
    if args.family == "bump":
        return charge.BumpCharge(N, args.charge, args.radius)
    if args.family == "constant":
        return charge.ConstantDensity(N, args.amplitude if args.amplitude is not None else 1.0,
                                      args.radius)
    raise ValidationError(f"unknown family {args.family!r}")


def _grid(args):
    return fields.BoxGrid(args.dim, args.box, args.grid)


def _energy_config(args):
    return minimizer.EnergyConfig(max_iterations=args.max_iterations, tolerance=args.tolerance)


def _axis_rows(field):
    """Values along the positive first axis through the centre."""
    g = field.grid
    c = g.points_per_axis // 2
    idx = (slice(c, None),) + (c,) * (g.dim - 1)
    return g.axis()[c:], field.values[idx]


# -- commands ---------------------------------------------------------------------------
def cmd_solve_radial(args):
    dens = _radial_density(args)
    prof = radial.solve_radial(dens, r0=args.r0, per_decade=args.per_decade)
    cls = radial.classify_origin_regularity(prof)
    target = prof.flux * prof.mesh ** (1 - prof.dim)
    identity = np.abs(prof.flux_ratio() + target) / np.maximum(np.abs(target), 1e-300)
    summary = {"density": dens.describe(), "classification": cls.to_dict(),
               "mesh_points": int(prof.mesh.size),
               "max_identity_defect": float(identity.max()),
               "total_flux": float(prof.flux[-1]), "potential_at_rmin": float(prof.potential[0])}
    rho = dens.value(prof.mesh)
    rows = zip(prof.mesh, rho, prof.flux, prof.slope, prof.potential)
    return {"radial.csv": dump_csv(["r", "rho", "F", "slope", "u"], rows),
            "classification.json": dump_json(summary)}


def _grid_datum(args, grid):
    if args.datum == "point":
        if args.mollify is None:
            raise ValidationError("a point charge must be mollified on the grid (--mollify n)")
        pc = charge.point_charge(args.charge, grid)
        return charge.mollify(pc, args.mollify, grid), charge.BumpCharge(grid.dim, args.charge,
                                                                          1.0 / args.mollify)
    dens = charge.BumpCharge(grid.dim, args.charge, args.radius)
    vals = charge.sample_to_grid(charge.ChargeDensity.analytic(dens), grid)
    return charge.ChargeDensity.on_grid(vals, grid), dens


def cmd_solve_grid(args):
    grid = _grid(args)
    rho, shape = _grid_datum(args, grid)
    config = _energy_config(args)
    boundary = exact = None
    if args.compare_radial:
        prof = radial.solve_radial(shape)
        exact = prof.potential_at(grid.node_distance())
        boundary = exact
    res = minimizer.minimize(rho, grid, config, boundary=boundary)
    diag = res.diagnostics()
    diag["grid"] = grid.to_dict()
    if exact is not None:
        diag["sup_error_vs_radial"] = float(np.max(np.abs(res.field.values - exact)))
    r, vals = _axis_rows(res.field)
    return {"field.bin": fields.field_to_bytes(res.field), "diagnostics.json": dump_json(diag),
            "axis_profile.csv": dump_csv(["x", "u"], zip(r, vals))}


def cmd_series_sweep(args):
    grid = _grid(args)
    orders = [int(k) for k in args.orders.split(",")]
    if any(k < 1 for k in orders):
        raise ValidationError("orders must be positive integers")
    rho = plap.standard_test_datum(grid, charge=args.charge, radius=args.radius)
    config = _energy_config(args)
    ref = minimizer.minimize(rho, grid, config)
    rows = []
    for k in orders:
        res = plap.minimize_truncated(rho, grid, k, config)
        xn = plap.xnorm_2k(res.field, k)
        rows.append([k, res.energy, float(np.max(np.abs(res.field.values - ref.field.values))),
                     res.sup_gradient_norm, xn.combined, int(res.converged)])
    coeffs = plap.series_coefficients(max(orders))
    summary = {"reference_energy": ref.energy, "coefficients": [str(c) for c in coeffs.exact],
               "orders": orders, "sup_differences": [r[2] for r in rows]}
    return {"sweep.csv": dump_csv(["k", "energy", "sup_diff", "sup_grad", "xnorm", "converged"],
                                  rows),
            "sweep.json": dump_json(summary)}


def cmd_verify_estimate(args):
    N = args.dim
    q = args.q_factor * N
    gamma = args.gamma if args.gamma is not None else 1 / (2 * N)
    common = dict(q_factor=args.q_factor, core=args.core, taper=args.taper, r0=args.r0)
    if args.C is None:
        # calibrate on a deterministic design grid, certify on fresh random pairs
        betas = tuple(sorted({-0.25, -0.5, -0.75, args.beta}, reverse=True))
        design, _ = verify.calibration_suite(N, betas=betas, design="grid", n_d=args.calib_d,
                                             n_R=args.calib_r, **common)
        cal = verify.calibrate_constant(design, gamma=gamma, q=q, safety=args.safety)
        C, calibration = cal.C, asdict(cal)
    else:
        C, calibration = args.C, None
    suite, _ = verify.calibration_suite(N, betas=(args.beta,), n_pairs=args.pairs,
                                        seed=args.seed, **common)
    reports = [verify.evaluate_estimate(prof, dens, x0, R, gamma=gamma, C=C, q=q).to_dict()
               for prof, dens, x0, R in suite]
    margins = [r["margin"] for r in reports]
    return {"estimate.json": dump_json({"calibration": calibration, "C": C, "gamma": gamma,
                                        "q": q, "beta_datum": args.beta, "reports": reports,
                                        "min_margin": min(margins),
                                        "all_nonnegative": bool(min(margins) >= 0)})}


def cmd_small_data(args):
    rep = verify.small_data_report(args.dim, args.m, args.q, args.norm_q, args.norm_m,
                                   gamma=args.gamma)
    out = {"report": rep.to_dict()}
    if args.threshold:
        t, c3 = verify.small_data_threshold(args.dim, args.m, args.q, args.norm_q, args.norm_m,
                                            gamma=args.gamma)
        out["threshold"] = {"multiplier": t, "empirical_c3": c3}
    return {"small_data.json": dump_json(out)}


def cmd_gronwall(args):
    prob = gronwall.power_problem(args.C0, args.C1, args.beta, args.gamma, args.T)
    run = gronwall.fixed_point_iterates(prob, args.iterations, args.mesh)
    bound = gronwall.bound_curve(prob, run.mesh)
    cert = gronwall.certify_bound(prob, run.mesh, run.U, args.tolerance)
    closed = gronwall.power_case_bound(args.C0, args.C1, args.beta, args.gamma, args.T)
    summary = {"certificate": cert.to_dict(), "bound_at_T": bound[-1], "closed_form_at_T": closed,
               "sup_differences": list(run.sup_differences)}
    return {"bound.csv": dump_csv(["t", "bound", "fixed_point"], zip(run.mesh, bound, run.U)),
            "gronwall.json": dump_json(summary)}


def cmd_scaling_check(args):
    grid = _grid(args)
    dens = _radial_density(args)
    ts = [float(t) for t in args.t.split(",")]
    reports = [verify.scaling_check(dens, t, grid, q=args.q, seed=args.seed).to_dict() for t in ts]
    return {"scaling.json": dump_json({"density": dens.describe(), "reports": reports})}


COMMANDS = {"solve-radial": cmd_solve_radial, "solve-grid": cmd_solve_grid,
            "series-sweep": cmd_series_sweep, "verify-estimate": cmd_verify_estimate,
            "small-data": cmd_small_data, "gronwall": cmd_gronwall,
            "scaling-check": cmd_scaling_check}


# -- parser -----------------------------------------------------------------------------
def _common(p):
    p.add_argument("--config", help="JSON file of parameter defaults (keys are flag names)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=3)


def _density_flags(p, family="power", beta=0.5):
    p.add_argument("--family", choices=["power", "bump", "constant"], default=family)
    p.add_argument("--amplitude", type=float, default=None,
                   help="power amplitude (default N - 1 - beta)")
    p.add_argument("--beta", type=float, default=beta)
    p.add_argument("--r0", type=float, default=1.0)
    p.add_argument("--core", type=float, default=0.0)
    p.add_argument("--taper", type=float, default=0.0)
    p.add_argument("--charge", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=0.5)


def _grid_flags(p, points=33, box=1.0):
    p.add_argument("--grid", type=int, default=points, help="points per axis")
    p.add_argument("--box", type=float, default=box, help="box half-width")


def _solver_flags(p):
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--tolerance", type=float, default=1e-12)


def build_parser():
    parser = argparse.ArgumentParser(prog="borninfeld", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-radial", help="exact radial solution and origin classification")
    _common(p)
    _density_flags(p)
    p.add_argument("--per-decade", type=int, default=200)

    p = sub.add_parser("solve-grid", help="minimize the discrete energy on a box")
    _common(p)
    _grid_flags(p)
    _solver_flags(p)
    p.add_argument("--datum", choices=["bump", "point"], default="bump")
    p.add_argument("--charge", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--mollify", type=int, default=None, help="mollifier index n (radius 1/n)")
    p.add_argument("--compare-radial", action="store_true",
                   help="impose the radial exact potential on the boundary and report the error")

    p = sub.add_parser("series-sweep", help="truncated-series minimizers over orders k")
    _common(p)
    _grid_flags(p, points=17)
    _solver_flags(p)
    p.add_argument("--orders", default="1,2,4,8,16")
    p.add_argument("--charge", type=float, default=1.0)
    p.add_argument("--radius", type=float, default=0.5)

    p = sub.add_parser("verify-estimate", help="mean-value inequality margins on a radial solution")
    _common(p)
    p.add_argument("--beta", type=float, default=-0.5)
    p.add_argument("--r0", type=float, default=1.0)
    p.add_argument("--core", type=float, default=0.1)
    p.add_argument("--taper", type=float, default=0.5)
    p.add_argument("--q-factor", type=int, default=7, help="q = q_factor * N")
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--C", type=float, default=None, help="skip calibration and use this constant")
    p.add_argument("--calib-d", type=int, default=6, help="centre distances in the calibration grid")
    p.add_argument("--calib-r", type=int, default=12, help="radii in the calibration grid")
    p.add_argument("--safety", type=float, default=0.1, help="relative reduction of the fitted C")

    p = sub.add_parser("small-data", help="small-data constants and v lower bound")
    _common(p)
    p.add_argument("--m", type=float, default=1.2)
    p.add_argument("--q", type=float, default=7.0)
    p.add_argument("--norm-q", type=float, default=0.0)
    p.add_argument("--norm-m", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--threshold", action="store_true",
                   help="bisect the largest multiple of the given norms with a positive bound")

    p = sub.add_parser("gronwall", help="Gronwall bound and fixed-point certification")
    _common(p)
    p.add_argument("--C0", type=float, default=1.0)
    p.add_argument("--C1", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--mesh", type=int, default=2048)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("scaling-check", help="scaling identities for norms and energy")
    _common(p)
    _grid_flags(p)
    _density_flags(p, beta=-0.75)
    p.add_argument("--t", default="0.5,2")
    p.add_argument("--q", type=float, default=7.0)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ValidationError("config must be a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise ValidationError(f"unknown config keys for {args.command}: {unknown}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)   # explicit flags override the file
    return args


def _manifest(args, artifacts, wall):
    config = {k: v for k, v in sorted(vars(args).items())}
    return {"manifest_version": MANIFEST_VERSION, "command": args.command, "config": config,
            "versions": {"borninfeld": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "sympy": sympy.__version__},
            "artifacts": {name: hashlib.sha256(data).hexdigest()
                          for name, data in sorted(artifacts.items())},
            "wall_time_seconds": wall}


def _origin_module(exc):
    """Name of the package module in which the exception was raised."""
    tb, name = exc.__traceback__, "cli"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("borninfeld."):
            name = mod.split(".", 1)[1]
        tb = tb.tb_next
    return name


def _fail(exc, code):
    record = {"error": type(exc).__name__, "message": str(exc),
              "module": _origin_module(exc), "exit_code": code}
    sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
    return code


def run(argv=None):
    """Run one command; returns the exit status."""
    start = time.perf_counter()
    try:
        args = parse_args(argv)
    except SystemExit as exc:           # argparse usage errors and --help/--version
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_INVALID
    except ValidationError as exc:
        return _fail(exc, EXIT_INVALID)
    try:
        artifacts = COMMANDS[args.command](args)
    except (ValidationError, HypothesisError) as exc:
        return _fail(exc, EXIT_INVALID)
    except (ConvergenceError, ConstraintViolation, DivergentIntegralError, BornInfeldError,
            FloatingPointError, ArithmeticError) as exc:
        return _fail(exc, EXIT_NUMERICAL)
    try:
        os.makedirs(args.out, exist_ok=True)
        manifest = _manifest(args, artifacts, time.perf_counter() - start)
        for name, data in artifacts.items():
            with open(os.path.join(args.out, name), "wb") as fh:
                fh.write(data)
        with open(os.path.join(args.out, "manifest.json"), "wb") as fh:
            fh.write(dump_json(manifest))
    except OSError as exc:
        return _fail(exc, EXIT_INVALID)
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

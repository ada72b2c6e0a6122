"""Command-line entry point.

Subcommands ``ivp``, ``bvp``, ``check`` and ``baseline`` take a run
configuration (``--config FILE`` or ``--preset NAME``) and write
``trajectory.csv`` (or ``trajectory.json``) and ``report.json`` into
``--out``. ``presets list`` prints the shipped presets.

Exit codes: 0 success, 1 a diagnostics verdict failed, 2 invalid
configuration, 3 boundary-value solve did not converge, 4 the integration
stopped at a zero of the field.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, RunConfig, preset, validate
from .diagnostics import _jsonable, analyze
from .euclid import (ConvergenceError, branch_trajectory, j_two, natural_cubic_baseline,
                     solve_euclid_bvp, spline_trajectory)
from .integrator import (CubicState, ExtremalState, IntegrationError, SO3ReducedState,
                         ZeroFieldError, integrate)
from .manifolds import SO3, ManifoldId
from .shooting import ShootingProblem, check_multipoint, solve
from .validation import BoundaryData

logger = logging.getLogger("linfcurves")

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3
EXIT_EVENT = 4


# -- output --------------------------------------------------------------------

def column_names(traj):
    """Header of the trajectory file, one name per state component."""
    n = traj.n
    if traj.system in ("so3_reduced", "so3_frame"):
        names = [f"V{i}" for i in range(3)] + [f"W{i}" for i in range(3)]
        if traj.system == "so3_frame":
            names += [f"R{i}{j}" for i in range(3) for j in range(3)]
    else:
        blocks = {"sphere_extremal": ("x", "xdot", "X", "Xdot"),
                  "euclid_extremal": ("x", "xdot", "X", "Xdot"),
                  "sphere_cubic": ("x", "xdot", "A", "B"),
                  "euclid_cubic": ("x", "xdot", "A", "B"),
                  "curve": ("x", "xdot", "acc")}[traj.system]
        names = [f"{b}{i}" for b in blocks for i in range(n)]
    return ["t"] + names + ["phi", "acc_norm"]


def trajectory_table(traj):
    phi = traj.phi
    if phi is None:
        phi = traj.meta.get("phi")
    if phi is None:
        phi = np.full(len(traj.times), np.nan)
    acc = np.linalg.norm(traj.acceleration, axis=1)
    return np.column_stack([traj.times, traj.states, phi, acc])


def _fmt(v):
    return format(float(v), ".17g")


def write_trajectory(traj, out_dir, fmt):
    cols = column_names(traj)
    table = trajectory_table(traj)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in table:
            w.writerow([_fmt(v) for v in row])
        path = out_dir / "trajectory.csv"
        path.write_text(buf.getvalue())
    else:
        path = out_dir / "trajectory.json"
        rows = [[float(v) if np.isfinite(v) else None for v in row] for row in table]
        path.write_text(json.dumps({"columns": cols, "rows": rows}) + "\n")
    return path


def read_trajectory_csv(path):
    """``(columns, table)`` from a trajectory CSV written by this tool."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        cols = next(r)
        table = np.array([[float(v) for v in row] for row in r])
    return cols, table


def write_json(obj, path):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# -- runs ----------------------------------------------------------------------

def _manifold(cfg):
    return ManifoldId.from_dict(cfg.manifold)


def initial_state(cfg):
    m = _manifold(cfg)
    d = {k: np.asarray(v, dtype=float) for k, v in cfg.initial.items()}
    if cfg.system == "sphere_extremal":
        return ExtremalState(m, d["x"], d["xdot"], d["X"], d["Xdot"], float(cfg.z))
    if cfg.system == "so3_reduced":
        return SO3ReducedState(d["V"], d["W"], float(cfg.z), np.asarray(cfg.C, dtype=float),
                               frame=d.get("R0"))
    return CubicState(m, d["x"], d["xdot"], d["A"], d["B"])


def _integrate(cfg):
    return integrate(initial_state(cfg), cfg.span, rtol=cfg.rtol, atol=cfg.atol,
                     n_samples=cfg.sample_count)


def run_ivp(cfg, out_dir):
    traj = _integrate(cfg)
    report = analyze(traj, cfg.thresholds)
    write_trajectory(traj, out_dir, cfg.output)
    doc = report.to_dict()
    doc["status"] = traj.status
    doc["events"] = [e.time for e in traj.events]
    write_json(doc, out_dir / "report.json")
    if traj.status == "event":
        return EXIT_EVENT
    return EXIT_OK if report.passed else EXIT_VERDICT


def run_check(cfg, out_dir):
    traj = _integrate(cfg)
    report = analyze(traj, cfg.thresholds)
    doc = report.to_dict()
    ok = report.passed
    if cfg.knots.get("times"):
        mp = check_multipoint(traj, cfg.knots["times"], cfg.thresholds)
        doc["multipoint"] = mp
        ok = ok and mp["any_segment_passes"]
    doc["status"] = traj.status
    write_trajectory(traj, out_dir, cfg.output)
    write_json(doc, out_dir / "report.json")
    if traj.status == "event":
        return EXIT_EVENT
    return EXIT_OK if ok else EXIT_VERDICT


def _boundary(cfg):
    b = {k: np.asarray(v, dtype=float) for k, v in cfg.boundary.items()}
    return BoundaryData(b["x0"], b["x1"], b["v0"], b.get("v1"), float(cfg.span[0]),
                        float(cfg.span[1]))


def run_bvp(cfg, out_dir):
    data = _boundary(cfg)
    if cfg.system == "euclid_closed_form":
        try:
            branch = solve_euclid_bvp(data, random_state=cfg.seed)
        except ConvergenceError as exc:
            write_json({"converged": False, "message": str(exc)}, out_dir / "solution.json")
            return EXIT_NONCONVERGENCE
        traj = branch_trajectory(branch, cfg.span, cfg.sample_count)
        report = analyze(traj, cfg.thresholds)
        write_trajectory(traj, out_dir, cfg.output)
        write_json(report.to_dict(), out_dir / "report.json")
        write_json({"converged": True, "branch": branch.to_dict()}, out_dir / "solution.json")
        return EXIT_OK

    problem = ShootingProblem(_manifold(cfg), data, cfg.variant, restarts=cfg.restarts,
                              seed=cfg.seed, rtol=cfg.rtol, atol=cfg.atol)
    res = solve(problem, cfg.sample_count)
    u = res.unknowns
    write_json({
        "converged": res.converged, "residual": res.residual,
        "iterations": res.iterations, "seed_index": res.seed_index,
        "event_time": res.event_time,
        "unknowns": {"X0": u.X0.tolist(), "X0dot": u.X0dot.tolist(), "z": u.z},
    }, out_dir / "solution.json")
    if res.solution is not None:
        write_trajectory(res.solution, out_dir, cfg.output)
        write_json(res.diagnostics.to_dict(), out_dir / "report.json")
    return EXIT_OK if res.converged else EXIT_NONCONVERGENCE


def run_baseline(cfg, out_dir):
    sp = natural_cubic_baseline(cfg.knots["times"], cfg.knots["points"])
    traj = spline_trajectory(sp.spline_, cfg.span, cfg.sample_count)
    report = analyze(traj, cfg.thresholds)
    doc = report.to_dict()
    doc["J2"] = j_two(sp.spline_)
    doc["multipoint"] = check_multipoint(traj, cfg.knots["times"], cfg.thresholds)
    write_trajectory(traj, out_dir, cfg.output)
    write_json(doc, out_dir / "report.json")
    return EXIT_OK


RUNNERS = {"ivp": run_ivp, "bvp": run_bvp, "check": run_check, "baseline": run_baseline}


# -- argument handling -----------------------------------------------------------

def _error(kind, messages, code):
    print(json.dumps({"error": kind, "messages": messages}, sort_keys=True))
    return code


def load_config(args, mode):
    """Config for subcommand ``mode``; presets adopt the subcommand's mode."""
    if args.preset is not None:
        cfg = preset(args.preset)
        cfg.mode = mode
        return cfg
    text = Path(args.config).read_text()
    cfg = RunConfig.from_json(text)
    if cfg.mode != mode:
        raise ValueError(f"config mode {cfg.mode!r} does not match subcommand {mode!r}")
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="linfcurves",
        description="Minimum L-infinity acceleration curves on E^m, S^m and SO(3).")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for mode, text in (("ivp", "integrate an initial-value problem"),
                       ("bvp", "solve a boundary-value problem"),
                       ("check", "integrate and run the extremality checks"),
                       ("baseline", "natural cubic spline baseline through knots")):
        p = sub.add_parser(mode, help=text)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="RunConfig JSON file")
        src.add_argument("--preset", help="name of a shipped preset")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
    pre = sub.add_parser("presets", help="shipped presets")
    pre_sub = pre.add_subparsers(dest="action", required=True)
    ls = pre_sub.add_parser("list", help="list presets")
    ls.add_argument("--json", action="store_true", help="print full configs as JSON")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "presets":
        if args.json:
            print(json.dumps({k: v.to_dict() for k, v in sorted(PRESETS.items())},
                             indent=2, sort_keys=True))
        else:
            for name in sorted(PRESETS):
                c = PRESETS[name]
                print(f"{name}\t{c.mode}\t{c.system}\tspan={c.span}")
        return EXIT_OK

    try:
        cfg = load_config(args, args.command)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _error("validation", [str(exc).strip("'\"")], EXIT_VALIDATION)
    errors = validate(cfg)
    if errors:
        return _error("validation", errors, EXIT_VALIDATION)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        code = RUNNERS[args.command](cfg, out_dir)
    except ZeroFieldError as exc:
        return _error("numerical_event", [str(exc)], EXIT_EVENT)
    except IntegrationError as exc:
        return _error("numerical_event", [str(exc)], EXIT_EVENT)
    logger.info("finished with exit code %d", code)
    return code


if __name__ == "__main__":
    sys.exit(main())

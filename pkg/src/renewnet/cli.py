"""Command-line front end: simulate, sweep, optimize, verify.

Every command loads a JSON configuration (see docs/config.md), runs the
requested computation, and writes CSV outputs plus a small JSON run
manifest into the output directory.  All commands are deterministic:
repeated invocations with identical flags produce byte-identical CSV
bodies (the manifest's wall-clock field is the only varying output).

Exit codes: 0 on success, 1 on runtime errors or verification
violations, 2 on bad usage (including a missing configuration file).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import functionals as F
from . import model as M
from . import optimize as O
from . import picard as P
from . import verify as V
from .expr import ExprError
from .fv import Mesh, SolverError, simulate

DETERMINISM_NOTE = "seed-free deterministic run: identical flags reproduce identical CSV bodies"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


class Manifest:
    """Run manifest written before any output, finalized afterwards."""

    def __init__(self, out_dir: Path, command: str, args: argparse.Namespace, model: M.ModelConfig, mesh: Mesh | None):
        self.path = out_dir / "manifest.json"
        self.t0 = time.monotonic()
        self.data = {
            "command": command,
            "config": str(getattr(args, "config", "")),
            "parameters": dict(model.parameters),
            "mesh": {"da": dict(mesh.da), "cells": dict(mesh.n)} if mesh else None,
            "solver": getattr(args, "solver", None),
            "determinism": DETERMINISM_NOTE,
            "output_dir": str(out_dir),
            "outputs": [],
            "wall_clock_s": None,
        }
        self.write()

    def add(self, path: Path) -> None:
        self.data["outputs"].append(path.name)

    def write(self) -> None:
        with open(self.path, "w") as fh:
            json.dump(self.data, fh, indent=2)
            fh.write("\n")

    def finalize(self) -> None:
        self.data["wall_clock_s"] = round(time.monotonic() - self.t0, 3)
        self.write()


def load_config(path_str: str) -> tuple[dict, Path]:
    path = Path(path_str)
    if not path.exists():
        print(f"error: configuration file not found: {path}", file=sys.stderr)
        raise SystemExit(2)
    with open(path) as fh:
        return json.load(fh), path


class ConfigFamily:
    """Rebuild the model from a raw configuration with one parameter swept."""

    def __init__(self, raw: dict, name: str):
        self.raw = raw
        self.name = name
        params = raw.get("parameters", {})
        if name not in params:
            raise M.ModelError(f"swept parameter '{name}' is not declared in the configuration")

    def __call__(self, value: float) -> M.ModelConfig:
        raw = json.loads(json.dumps(self.raw))
        raw["parameters"][self.name] = float(value)
        return M.build_model(raw)


def _jobs(args) -> int:
    if getattr(args, "jobs", None):
        return int(args.jobs)
    env = os.environ.get("RENEWNET_JOBS")
    return int(env) if env else 1


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", None) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot_count(horizon: float) -> int:
    return int(max(257, min(1001, round(horizon) + 1)))


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args) -> int:
    raw, _ = load_config(args.config)
    model = M.build_model(raw)
    mesh = Mesh.from_target(model, args.da)
    if args.snapshots:
        times = [float(s) for s in args.snapshots.split(",")]
    else:
        times = list(np.linspace(0.0, model.horizon, 11))
    out = _out_dir(args)
    manifest = Manifest(out, "simulate", args, model, mesh)
    if args.solver == "picard":
        traj = P.picard_trajectory(model, mesh, [t for t in times if t > 0] or [model.horizon])
    else:
        traj = simulate(model, mesh, times, cfl=args.cfl)

    tpath = out / "trajectory.csv"
    rows = []
    for t, states in zip(traj.times, traj.snapshots):
        for e in model.edges:
            centers = mesh.centers(e.id)
            for x, u in zip(centers, states[e.id]):
                rows.append((t, e.id, x, u))
    write_csv(tpath, ["t", "edge", "x", "u"], rows)
    manifest.add(tpath)

    bpath = out / "boundary.csv"
    bt, bvals = traj.boundary_log()
    brows = []
    for k, t in enumerate(bt):
        for e in model.edges:
            brows.append((t, e.id, bvals[e.id][k]))
    write_csv(bpath, ["t", "edge", "b"], brows)
    manifest.add(bpath)

    apath = out / "apriori.csv"
    bundle = F.apriori_check(traj, model)
    write_csv(
        apath,
        ["t", "quantity", "lhs", "rhs", "ok"],
        [(r.t, r.quantity, r.lhs, r.rhs, r.ok) for r in bundle.rows],
    )
    manifest.add(apath)
    manifest.finalize()
    if not bundle.ok:
        print(f"a-priori bound violations: {len(bundle.violations)}", file=sys.stderr)
        return 1
    print(f"wrote {tpath}, {bpath}, {apath}")
    return 0


def _objective(args):
    try:
        return O.OBJECTIVES[args.objective]
    except KeyError:
        print(f"error: unknown objective '{args.objective}'", file=sys.stderr)
        raise SystemExit(2) from None


def cmd_sweep(args) -> int:
    raw, _ = load_config(args.config)
    family = ConfigFamily(raw, args.param)
    model0 = family(raw["parameters"][args.param])
    objective = _objective(args)
    grid = np.linspace(args.start, args.stop, args.points)
    out = _out_dir(args)
    manifest = Manifest(out, "sweep", args, model0, Mesh.from_target(model0, args.da))
    result = O.sweep(
        family,
        objective,
        grid,
        da=args.da,
        cfl=args.cfl,
        snapshots=_snapshot_count(model0.horizon),
        jobs=_jobs(args),
    )
    spath = out / "sweep.csv"
    write_csv(
        spath,
        ["param", "objective"],
        [(p.param, p.objective if p.objective is not None else "") for p in result.points],
    )
    manifest.add(spath)
    manifest.finalize()
    failed = [p for p in result.points if p.objective is None]
    for p in failed:
        print(f"point {p.param} failed: {p.error}", file=sys.stderr)
    best = result.argmax
    print(f"best {args.param} = {best.param:.6g} with {args.objective} = {best.objective:.6g}")
    return 0


def cmd_optimize(args) -> int:
    raw, _ = load_config(args.config)
    family = ConfigFamily(raw, args.param)
    model0 = family(raw["parameters"][args.param])
    objective = _objective(args)
    out = _out_dir(args)
    manifest = Manifest(out, "optimize", args, model0, Mesh.from_target(model0, args.da))
    res = O.maximize(
        family,
        objective,
        tol_param=args.tol,
        da=args.da,
        cfl=args.cfl,
        snapshots=_snapshot_count(model0.horizon),
        grid_points=args.points,
        jobs=_jobs(args),
    )
    spath = out / "sweep.csv"
    write_csv(
        spath,
        ["param", "objective"],
        [(p.param, p.objective if p.objective is not None else "") for p in res.sweep.points],
    )
    manifest.add(spath)
    rpath = out / "refinement.csv"
    write_csv(rpath, ["param", "objective"], res.sweep.trace)
    manifest.add(rpath)
    manifest.finalize()
    print(f"{args.param}* = {res.param:.6g}")
    print(f"{args.objective}* = {res.value:.6g}")
    return 0


def cmd_verify(args) -> int:
    raw, _ = load_config(args.config)
    model = M.build_model(raw)
    out = _out_dir(args)
    manifest = Manifest(out, "verify", args, model, None)
    rows = V.run_verify(model, level=args.level)
    vpath = out / "verify.csv"
    write_csv(
        vpath,
        ["suite", "check", "value", "bound", "ok"],
        [(r.suite, r.check, r.value, r.bound, r.ok) for r in rows],
    )
    manifest.add(vpath)
    manifest.finalize()
    width = max(len(r.check) for r in rows) + 2
    for r in rows:
        status = "ok  " if r.ok else "FAIL"
        print(f"[{status}] {r.suite:12s} {r.check:{width}s} value={r.value:.6g} bound={r.bound:.6g}")
    bad = [r for r in rows if not r.ok]
    print(f"{len(rows) - len(bad)}/{len(rows)} checks passed")
    return 1 if bad else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="renewnet",
        description="Solvers and optimizers for renewal equations on graphs",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, mesh=True):
        p.add_argument("--config", required=True, help="path to a JSON model configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=None, help="worker count (env RENEWNET_JOBS)")
        if mesh:
            p.add_argument("--da", type=float, default=None, help="target cell width")
            p.add_argument("--cfl", type=float, default=0.9)

    p_sim = sub.add_parser("simulate", help="run one simulation and export CSVs")
    common(p_sim)
    p_sim.add_argument("--solver", choices=["lxf", "picard"], default="lxf")
    p_sim.add_argument("--snapshots", default=None, help="comma-separated output times")
    p_sim.set_defaults(fn=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="objective versus a control parameter")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--from", dest="start", type=float, default=0.0)
    p_sweep.add_argument("--to", dest="stop", type=float, default=1.0)
    p_sweep.add_argument("--points", type=int, default=21)
    p_sweep.add_argument("--objective", choices=sorted(O.OBJECTIVES), required=True)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_opt = sub.add_parser("optimize", help="maximize an objective over a parameter")
    common(p_opt)
    p_opt.add_argument("--param", required=True)
    p_opt.add_argument("--objective", choices=sorted(O.OBJECTIVES), required=True)
    p_opt.add_argument("--tol", type=float, default=0.005)
    p_opt.add_argument("--points", type=int, default=21)
    p_opt.set_defaults(fn=cmd_optimize)

    p_ver = sub.add_parser("verify", help="solver cross-checks and invariant suites")
    common(p_ver, mesh=False)
    p_ver.add_argument("--level", choices=["fast", "full"], default="fast")
    p_ver.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (M.ModelError, SolverError, ExprError, P.PicardError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 infeasible plan or program,
3 solver failure, 4 scenario outcome contrary to expectation (or a failing
acceptance row), 5 geometry check above tolerance.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import bench
from . import config
from . import conic_solver as cs
from . import speed_planner as sp
from .errors import ConfigError, Infeasible, NonplanarBrakeError, SolverFailure
from .road_surface import check_surface
from .simulator import MODES, run_scenario, write_log_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3
EXIT_SCENARIO = 4
EXIT_CHECK = 5

log = logging.getLogger("nonplanar_brake")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


class _Output:
    """Emits the stdout summary and CSV comment line, with or without run metadata."""

    def __init__(self, args):
        self.meta = not args.no_meta
        self.argv = args.argv

    def comment(self) -> str | None:
        if not self.meta:
            return None
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        return f"nonplanar_brake {__version__} {stamp}"

    def summary(self, doc: dict, path: Path | None = None) -> None:
        doc = dict(doc)
        if self.meta:
            doc["meta"] = {"version": __version__, "argv": self.argv,
                           "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(
                               timespec="seconds")}
        text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
        sys.stdout.write(text)
        if path is not None:
            path.write_text(text)


def _resolve_inputs(args):
    """Scenario plus the road and vehicle, command-line files taking precedence."""
    sc = config.load_scenario(args.scenario)
    road = config.load_road(args.road) if args.road else sc.road
    if road is None:
        raise ConfigError("no road given: pass --road or set 'road' in the scenario")
    if args.vehicle:
        vehicle = config.load_vehicle(args.vehicle)
    elif sc.vehicle is not None:
        vehicle = sc.vehicle
    else:
        vehicle = config.load_vehicle(config.data_path("vehicles", "sedan.json"))
    return sc, road, vehicle


def _out_path(arg, sc, key) -> Path | None:
    """Output file from the command line, else from the scenario's ``outputs``."""
    if arg:
        return Path(arg)
    rel = sc.outputs.get(key)
    return sc.base / rel if rel else None


# -- subcommands -------------------------------------------------------------------------


def cmd_check_surface(args, out: _Output) -> int:
    road = config.load_road(args.road)
    try:
        ns, ny = (int(v) for v in args.grid.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--grid expects NSxNY, got {args.grid!r}") from None
    if ns < 1 or ny < 1:
        raise ConfigError("--grid sizes must be positive")
    worst = check_surface(road, ns, ny, args.step)
    passed = worst["max"] < args.tol
    out.summary({"road": road.kind, "grid": [ns, ny], "tolerance": args.tol, "passed": passed,
                 "max_rel_error": worst["max"],
                 "per_partial": {k: v for k, v in worst.items() if k != "max"}})
    return EXIT_OK if passed else EXIT_CHECK


def cmd_plan(args, out: _Output) -> int:
    sc, road, vehicle = _resolve_inputs(args)
    cfg = sc.config
    s_end = road.s_max if cfg.s_end is None else cfg.s_end
    stages = sp.build_stages(road, vehicle, cfg.lane_offset, cfg.s_start, s_end, cfg.N,
                             cfg.B_profile, planar=args.planar, paper_literal=args.paper_literal)
    prof = sp.solve_profile(stages, cfg.v0, args.paper_literal)
    path = _out_path(args.out, sc, "csv")
    if path is not None:
        sp.write_profile_csv(prof, path, comment=out.comment())
    flags = sp.intervention_report(prof)
    r = prof.residuals
    out.summary({
        "status": prof.status,
        "objective": prof.objective,
        "stages": prof.N,
        "iterations": prof.iterations,
        "interventions": sum(f for _, f in flags),
        "first_intervention_s": next((float(prof.s[k]) for k, (_, f) in enumerate(flags) if f),
                                     None),
        "min_speed": float(np.sqrt(max(prof.v2.min(), 0.0))),
        "max_friction_util": float(prof.friction_util.max()),
        "min_wheel_load": float(prof.min_normal.min()),
        "continuity_residual": prof.continuity_residual,
        "residuals": {"eq": r.eq_scaled, "cone": r.cone_scaled, "dual": r.dual,
                      "gap": r.gap_scaled},
        "csv": str(path) if path else None,
    }, _out_path(None, sc, "summary"))
    return EXIT_OK


def cmd_simulate(args, out: _Output) -> int:
    sc, road, vehicle = _resolve_inputs(args)
    mode = args.mode or sc.config.mode
    expect = sc.config.expect if mode == sc.config.mode else None
    result = run_scenario(road, vehicle, sc.config, mode=mode, paper_literal=args.paper_literal)
    path = _out_path(args.out, sc, "csv")
    if path is not None:
        write_log_csv(result.records, path, comment=out.comment())
    summ = result.summary()
    summ["expected"] = expect
    summ["message"] = result.message
    summ["csv"] = str(path) if path else None
    out.summary(summ, _out_path(None, sc, "summary"))
    if expect == "complete" and not result.completed:
        return EXIT_SCENARIO
    if expect == "depart" and result.outcome != "offroad":
        return EXIT_SCENARIO
    return EXIT_OK


def cmd_solve_conic(args, out: _Output) -> int:
    prog = config.load_program(args.input)
    sol = cs.solve(prog, max_iter=args.max_iter, tol=args.tol)
    if args.out:
        cs.dump_solution(sol, args.out)
    doc = {"status": sol.status, "iterations": sol.iterations,
           "primal_objective": sol.primal_objective, "dual_objective": sol.dual_objective,
           "out": args.out}
    if sol.residuals is not None:
        doc["residuals"] = {k: getattr(sol.residuals, k)
                            for k in sol.residuals.__dataclass_fields__}
    if "reason" in sol.info:
        doc["reason"] = sol.info["reason"]
    out.summary(doc)
    if sol.status == cs.OPTIMAL:
        return EXIT_OK
    if sol.status == cs.INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_SOLVER


def cmd_bench(args, out: _Output) -> int:
    keys = [k.strip() for k in args.only.split(",")] if args.only else None
    known = [c[0] for c in bench.CRITERIA]
    for k in keys or []:
        if k not in known:
            raise ConfigError(f"unknown criterion {k!r}; choose from {', '.join(known)}")
    results = bench.run_all(keys)
    print(bench.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_SCENARIO


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nonplanar-brake",
        description="Predictive braking on nonplanar roads: geometry checks, speed planning, "
                    "closed-loop simulation and the acceptance bench.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--paper-literal", action="store_true",
                    help="half-weight continuity update and undivided axle loads, for comparison")
    ap.add_argument("--no-meta", action="store_true",
                    help="omit timestamps and version from outputs (byte-identical reruns)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-surface", help="finite-difference check of a road's partials")
    p.add_argument("--road", required=True)
    p.add_argument("--grid", default="20x5", help="samples along x across, e.g. 20x5")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--step", type=float, default=1e-5, help="difference step (m)")
    p.set_defaults(func=cmd_check_surface)

    p = sub.add_parser("plan", help="solve the safety program for one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--road")
    p.add_argument("--vehicle")
    p.add_argument("--out", help="profile CSV")
    p.add_argument("--planar", action="store_true", help="plan as if the road were flat")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="closed-loop run of a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--road")
    p.add_argument("--vehicle")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out", help="time-series CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve-conic", help="solve a conic program given as JSON")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_solve_conic)

    p = sub.add_parser("bench", help="run the acceptance suite and print the table")
    p.add_argument("--only", help="comma-separated criterion keys, e.g. 1,2,6b")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    out = _Output(args)
    try:
        return args.func(args, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except NonplanarBrakeError as exc:
        # out-of-domain ranges and similar input problems
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

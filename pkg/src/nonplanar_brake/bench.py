"""Acceptance suite: one runner per criterion, each returning a pass/fail row.

The runners are independent and stateless, so they can run in any order or
in parallel. ``run_all`` executes them and ``format_table`` prints the rows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import config
from . import force_model as fm
from . import oracles as orc
from . import speed_planner as sp
from .errors import Infeasible, SolverFailure
from .kinematics import VelocityParam
from .road_surface import (RoadSurface, check_surface, eval_jet, fundamental_forms,
                           surface_frame)
from .scenarios import u_turn, winding_hill
from .simulator import run_scenario, warm_up


@dataclass
class CriterionResult:
    key: str
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.key} {self.name}: {self.detail} ({self.seconds:.2f} s)"


def _timed(key: str, name: str, budget: float | None, fn: Callable[[], tuple[bool, str]]):
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    if budget is not None and dt > budget:
        ok = False
        detail += f"; exceeded {budget:g} s budget"
    return CriterionResult(key, name, bool(ok), detail, dt)


# -- 1. geometry ---------------------------------------------------------------------


def geometry_roads() -> dict[str, RoadSurface]:
    return {
        "plane": RoadSurface.plane(100.0, 4.0),
        "crest": RoadSurface.crest(100.0, 60.0, 4.0, 30.0),
        "banked_arc": RoadSurface.banked_arc(50.0, -30.0, math.pi, 4.0),
        "u_turn": u_turn(),
        "winding_hill": winding_hill(),
    }


def geometry_suite(tol: float = 1e-6) -> tuple[bool, str]:
    worst = {name: check_surface(road)["max"] for name, road in geometry_roads().items()}
    top = max(worst, key=worst.get)
    return worst[top] < tol, f"max rel err {worst[top]:.2e} on {top} (tol {tol:g})"


# -- 2. identities ------------------------------------------------------------------------


def random_pose(rng: np.random.Generator, roads: list[RoadSurface]):
    road = roads[rng.integers(len(roads))]
    s = float(rng.uniform(0.01, road.s_max - 0.01))
    y = float(rng.uniform(-0.9, 0.9) * road.half_width)
    n = float(rng.uniform(0.0, 1.0))
    theta = float(rng.uniform(-0.6, 0.6))
    vel = VelocityParam(1.0, float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.05, 0.05)),
                        float(rng.uniform(-0.05, 0.05)))
    return road, s, y, n, theta, vel


def pose_identities(road, s, y, n, theta, vel, params: fm.VehicleParams) -> dict[str, float]:
    """Scaled residuals of the exact identities at one pose."""
    jet = eval_jet(road, s, y, position=False)
    forms = fundamental_forms(jet)
    frame = surface_frame(jet, theta)
    out = {}
    JJt = frame.J @ frame.J.T
    out["JJt=I"] = float(np.abs(JJt - forms.I).max() / np.abs(forms.I).max())

    forces, _ = fm.force_set(jet, forms, frame, n, vel, params)
    direct = fm.net_normal_force_quadratic(frame, forms, n, vel.beta, params.m)
    F3 = forces.Fb[2]
    scale = max(1.0, float(np.abs(F3.as_array()).max()))
    out["normal force routes"] = float(np.abs((F3 - direct).as_array()).max()) / scale

    normals = fm.wheel_normals(forces.KN, forces.Ft[2], params)
    total = normals.N_fr + normals.N_fl + normals.N_rr + normals.N_rl
    Ft3 = forces.Ft[2]
    sc = max(1.0, float(np.abs(Ft3.as_array()).max()))
    out["sum N = Ft3"] = float(np.abs((total - Ft3).as_array()).max()) / sc

    p = params
    roll = (p.t_f * (normals.N_fl - normals.N_fr) + p.t_r * (normals.N_rl - normals.N_rr))
    pitch = (p.l_r * (normals.N_rr + normals.N_rl) - p.l_f * (normals.N_fr + normals.N_fl))
    msc = max(1.0, float(np.abs(forces.KN[0].as_array()).max()),
              float(np.abs(forces.KN[1].as_array()).max()))
    out["moment reconstruction"] = max(
        float(np.abs((roll - forces.KN[0]).as_array()).max()),
        float(np.abs((pitch - forces.KN[1]).as_array()).max())) / msc
    return out


def identity_suite(count: int = 500, seed: int = 7, tol: float = 1e-10) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    roads = list(geometry_roads().values())
    params = fm.VehicleParams()
    worst: dict[str, float] = {}
    for _ in range(count):
        for k, v in pose_identities(*random_pose(rng, roads), params).items():
            worst[k] = max(worst.get(k, 0.0), v)
    top = max(worst, key=worst.get)
    return worst[top] < tol, f"{count} poses, worst {top} residual {worst[top]:.1e} (tol {tol:g})"


# -- 3. closed-form limits -------------------------------------------------------------------


def feasible_speed_limit(stages, v2_hi: float, rel_width: float = 1e-7) -> float:
    """Largest initial ``v**2`` for which the safety program is feasible, by bisection.

    A midpoint that lands exactly on the limit gives a program whose feasible
    set is a single point, which an interior-point method cannot always
    decide; such midpoints are moved slightly inward and retried.
    """
    lo, hi = 0.0, v2_hi
    while hi - lo > rel_width * hi:
        mid = 0.5 * (lo + hi)
        for attempt in range(3):
            try:
                sp.solve_profile(stages, math.sqrt(mid))
                lo = mid
                break
            except Infeasible:
                hi = mid
                break
            except SolverFailure:
                if attempt == 2:
                    raise
                mid -= 0.01 * (hi - lo)
    return lo


def limit_cases(params: fm.VehicleParams):
    """``(label, stages, nominal v**2, v**2 for the CoM path radius)``.

    The centre of mass rides at height ``h`` along the normal, so its path
    radius is ``R - h sin(bank)`` on a banked turn and ``R + h`` over a crest.
    """
    g, mu, h = params.g, params.mu, params.h
    cases = []
    for R, bank_pct in ((100.0, 0.0), (100.0, 30.0), (100.0, -30.0), (60.0, -15.0)):
        road = RoadSurface.banked_arc(R, bank_pct, 0.2, 4.0)
        phi = math.atan(bank_pct / 100.0)
        nominal = orc.banked_turn_limit(mu, R, phi, g)
        com = orc.banked_turn_limit(mu, R - h * math.sin(phi), phi, g)
        label = "flat circle" if bank_pct == 0 else f"bank {bank_pct:+g}% R={R:g}"
        cases.append((label, sp.build_stages(road, params, 0.0, 0.0, 2.0, 3), nominal, com))
    Rv = 200.0
    road = RoadSurface.crest(Rv, 2.0, 4.0, 0.0)
    cases.append(("crest", sp.build_stages(road, params, 0.0, 0.0, 2.0, 3),
                  orc.crest_contact_limit(Rv, g), orc.crest_contact_limit(Rv + h, g)))
    return cases


def limit_suite(tol: float = 5e-3) -> tuple[bool, str]:
    params = fm.VehicleParams()
    ok, parts = True, []
    for label, stages, nominal, com in limit_cases(params):
        v2 = feasible_speed_limit(stages, 4.0 * nominal)
        e_nom = v2 / nominal - 1.0
        e_com = v2 / com - 1.0
        ok &= abs(e_nom) < tol and abs(e_com) < tol
        parts.append(f"{label} {100 * e_nom:+.3f}%")
    return ok, "; ".join(parts) + f" (tol {100 * tol:g}%)"


# -- shared planner instances ------------------------------------------------------------


def oracle_cases(params: fm.VehicleParams | None = None):
    """Ten planning instances with nonzero intervention: ``(label, stages, v0)``."""
    p = params or fm.VehicleParams()
    slick = replace(p, mu=0.7)
    ut = u_turn()
    cases = [
        ("u-turn 25 m/s", sp.build_stages(ut, p, 0.0, 30.0, 130.0, 40), 25.0),
        ("u-turn R40 -20%", sp.build_stages(u_turn(40.0, -20.0), p, 0.0, 30.0, 110.0, 30), 22.0),
        ("u-turn mu 0.7", sp.build_stages(ut, slick, 0.0, 30.0, 130.0, 30), 22.0),
        ("u-turn +10% bank", sp.build_stages(u_turn(50.0, 10.0), p, 0.0, 30.0, 130.0, 30), 28.0),
        ("arc driver accelerating",
         sp.build_stages(RoadSurface.banked_arc(50.0, -30.0, math.pi, 4.0), p, 0.0, 0.0, 100.0,
                         30, B_profile=3000.0), 14.0),
        ("plane hard braking",
         sp.build_stages(RoadSurface.plane(100.0, 4.0), p, 0.0, 0.0, 90.0, 10,
                         B_profile=-20000.0), 20.0),
        ("crest braking",
         sp.build_stages(RoadSurface.crest(60.0, 30.0, 4.0, 10.0), p, 0.0, 0.0, 20.0, 10,
                         B_profile=-8000.0), 20.0),
        ("crest driver accelerating",
         sp.build_stages(RoadSurface.crest(80.0, 50.0, 4.0, 20.0), p, 0.0, 0.0, 50.0, 30,
                         B_profile=5000.0), 25.0),
        ("winding hill",
         sp.build_stages(winding_hill(), p, 0.0, 0.0, 200.0, 40), 27.0),
        ("u-turn pedal trace",
         sp.build_stages(ut, p, 0.0, 30.0, 130.0, 30,
                         B_profile=np.linspace(2000.0, -6000.0, 30)), 24.0),
    ]
    return cases


def random_cases(count: int = 20, seed: int = 11, params: fm.VehicleParams | None = None):
    """Small feasible planner-class instances drawn at random: ``(label, stages, v0)``."""
    p = params or fm.VehicleParams()
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        kind = int(rng.integers(4))
        if kind == 0:
            road = RoadSurface.plane(60.0, 4.0)
        elif kind == 1:
            road = RoadSurface.crest(float(rng.uniform(40, 150)), 60.0, 4.0,
                                     float(rng.uniform(0, 60)))
        elif kind == 2:
            road = RoadSurface.banked_arc(float(rng.uniform(30, 120)), float(rng.uniform(-30, 30)),
                                         1.2, 4.0)
        else:
            road = winding_hill()
        N = int(rng.integers(3, 7))
        span = float(rng.uniform(8.0, 30.0))
        s0 = float(rng.uniform(0.0, min(road.s_max, 60.0) - span))
        y = float(rng.uniform(-2.0, 2.0))
        B = rng.uniform(-15000.0, 5000.0, N)
        v0 = float(rng.uniform(5.0, 25.0))
        stages = sp.build_stages(road, p, y, s0, s0 + span, N, B_profile=B)
        try:
            sp.solve_profile(stages, v0)
        except Infeasible:
            continue
        out.append((f"random {len(out)} ({road.kind}, N={N})", stages, v0))
    return out


# -- 4. grid oracle -------------------------------------------------------------------------


def dp_agreement(stages, v0, obj_tol=0.01, v2_tol=0.02):
    """Compare one SOCP solve to the grid oracle; returns (ok, objective error, v^2 error)."""
    prof = sp.solve_profile(stages, v0)
    dp = orc.dp_oracle(stages, v0)
    e_obj = abs(dp.objective - prof.objective) / max(prof.objective, 1.0)
    # distance from the near-optimal envelope, relative to its magnitude (1 m^2/s^2 floor)
    below = np.maximum(dp.v2_lo - prof.v2, 0.0)
    above = np.maximum(prof.v2 - dp.v2_hi, 0.0)
    e_v2 = float(np.max((below + above) / np.maximum(np.abs(dp.v2_hi), 1.0)))
    return e_obj < obj_tol and e_v2 < v2_tol, e_obj, e_v2


def dp_suite() -> tuple[bool, str]:
    ok, worst_obj, worst_v2, bad = True, 0.0, 0.0, []
    cases = oracle_cases()
    for label, stages, v0 in cases:
        good, e_obj, e_v2 = dp_agreement(stages, v0)
        ok &= good
        worst_obj, worst_v2 = max(worst_obj, e_obj), max(worst_v2, e_v2)
        if not good:
            bad.append(label)
    detail = (f"{len(cases)} instances, worst objective err {100 * worst_obj:.3f}%, "
              f"worst v2 err {100 * worst_v2:.3f}%")
    if bad:
        detail += "; failing: " + ", ".join(bad)
    return ok, detail


# -- 5. certification --------------------------------------------------------------------


def certification_suite(tol: float = 1e-7, ref_tol: float = 1e-4) -> tuple[bool, str]:
    worst_res, solves = 0.0, 0
    for _, stages, v0 in oracle_cases() + random_cases():
        prof = sp.solve_profile(stages, v0)
        r = prof.residuals
        worst_res = max(worst_res, r.eq_scaled, r.cone_scaled, r.dual, r.dual_cone, r.gap_scaled)
        solves += 1
    worst_ref = 0.0
    for _, stages, v0 in random_cases():
        prof = sp.solve_profile(stages, v0)
        ref = orc.reference_solve(stages, v0)
        worst_ref = max(worst_ref, abs(ref.objective - prof.objective) / max(prof.objective, 1.0))
    ok = worst_res < tol and worst_ref < ref_tol
    return ok, (f"{solves} solves, worst residual {worst_res:.1e}; 20 reference instances, "
                f"worst rel diff {worst_ref:.1e}")


# -- 6. u-turn scenarios ----------------------------------------------------------------------


UTURN_FILES = {
    "none": "u_turn_none.json",
    "safety_system": "u_turn_safety.json",
    "safety_system_planar": "u_turn_planar.json",
}


def uturn_run(mode: str):
    sc = config.load_scenario(config.data_path("scenarios", UTURN_FILES[mode]))
    warm_up()
    t0 = time.perf_counter()
    result = run_scenario(sc.road, sc.vehicle, sc.config)
    return result, time.perf_counter() - t0, sc.road


def scenario_check(mode: str, budget: float = 10.0) -> tuple[bool, str]:
    result, dt, road = uturn_run(mode)
    summ = result.summary()
    if mode == "safety_system":
        ok = (result.completed and summ["max_abs_y"] <= road.half_width
              and summ["max_friction_util"] <= 1.0 and summ["min_wheel_load"] >= 0.0)
        detail = (f"{summ['outcome']}, max|y| {summ['max_abs_y']:.2f} m, util "
                  f"{summ['max_friction_util']:.3f}, min load {summ['min_wheel_load']:.0f} N")
    else:
        ok = result.outcome == "offroad"
        detail = f"{summ['outcome']} at s={summ['s_end']:.1f} m"
    ok &= dt < budget
    return ok, detail + f", run {dt:.1f} s"


# -- 7. continuity ----------------------------------------------------------------------------


def continuity_suite(tol: float = 1e-6) -> tuple[bool, str]:
    worst, exact = 0.0, True
    runs = oracle_cases() + random_cases()
    for _, stages, v0 in runs:
        for literal in (False, True):
            try:
                prof = sp.solve_profile(stages, v0, paper_literal=literal)
            except Infeasible:
                continue
            worst = max(worst, prof.continuity_residual)
            exact &= prof.v2[0] == v0 * v0
    return worst < tol and exact, (f"{len(runs)} instances, both continuity forms; worst "
                                   f"residual {worst:.1e}, initial condition "
                                   f"{'exact' if exact else 'NOT exact'}")


# -- driver ------------------------------------------------------------------------------------


CRITERIA = [
    ("1", "geometry finite differences", 5.0, geometry_suite),
    ("2", "force and kinematic identities", 5.0, identity_suite),
    ("3", "closed-form speed limits", 30.0, limit_suite),
    ("4", "grid dynamic-programming oracle", 120.0, dp_suite),
    ("5", "solver certification", None, certification_suite),
    ("6a", "u-turn without intervention departs", 10.0, lambda: scenario_check("none")),
    ("6b", "u-turn with safety system completes", 10.0, lambda: scenario_check("safety_system")),
    ("6c", "u-turn with planar planner departs", 10.0,
     lambda: scenario_check("safety_system_planar")),
    ("7", "continuity and initial condition", None, continuity_suite),
]


def run_criterion(key: str) -> CriterionResult:
    for k, name, budget, fn in CRITERIA:
        if k == key:
            return _timed(k, name, budget, fn)
    raise KeyError(key)


def run_all(keys=None) -> list[CriterionResult]:
    keys = keys or [c[0] for c in CRITERIA]
    return [run_criterion(k) for k in keys]


def format_table(results: list[CriterionResult]) -> str:
    w = max(len(r.name) for r in results)
    lines = [f"{'#':<3} {'criterion':<{w}}  result  seconds  detail"]
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.key:<3} {r.name:<{w}}  {mark:<6}  {r.seconds:7.2f}  {r.detail}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria passed")
    return "\n".join(lines)

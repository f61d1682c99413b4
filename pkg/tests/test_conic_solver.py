from __future__ import annotations

import json

import numpy as np
import pytest

from nonplanar_brake import conic_solver as cs
from nonplanar_brake import speed_planner as sp
from nonplanar_brake.bench import random_cases
from nonplanar_brake.force_model import VehicleParams
from nonplanar_brake.oracles import reference_solve
from nonplanar_brake.scenarios import u_turn


def abs_epigraph():
    """min t  s.t.  t >= x - 3,  t >= 3 - x,  x = 5   (variables x, t)."""
    return cs.ConicProgram(c=[0, 1], A=[[1, 0]], b=[5], G=[[1, -1], [-1, -1]], h=[3, -3], l=2)


def outside_disc():
    """||(x, y)|| <= 1 with x = 2."""
    return cs.ConicProgram(c=[0, 0], A=[[1, 0]], b=[2], G=[[0, 0], [-1, 0], [0, -1]],
                           h=[1, 0, 0], l=0, q=(3,))


def test_absolute_value_epigraph():
    sol = cs.solve(abs_epigraph())
    assert sol.status == cs.OPTIMAL
    np.testing.assert_allclose(sol.x, [5.0, 2.0], atol=1e-8)
    assert sol.primal_objective == pytest.approx(2.0, abs=1e-8)
    assert sol.residuals.certified(1e-7)
    assert abs(sol.residuals.gap) < 1e-7


def test_infeasible_cone():
    assert cs.solve(outside_disc()).status == cs.INFEASIBLE


def test_unbounded():
    prog = cs.ConicProgram(c=[-1.0], A=np.zeros((0, 1)), b=[], G=[[-1.0]], h=[0.0], l=1)
    assert cs.solve(prog).status == cs.UNBOUNDED


def test_iteration_limit():
    stages = sp.build_stages(u_turn(), VehicleParams(), 0.0, 30.0, 130.0, 20)
    prog, _ = sp.assemble_program(stages, 25.0)
    assert cs.solve(prog, max_iter=2).status == cs.MAX_ITER


def test_program_validation():
    with pytest.raises(ValueError):
        cs.ConicProgram(c=[0, 1], A=np.zeros((0, 2)), b=[], G=[[1, 0]], h=[1, 2], l=2)
    with pytest.raises(ValueError):
        cs.ConicProgram(c=[0, 1], A=np.zeros((0, 2)), b=[], G=[[1, 0]], h=[1], l=0, q=(2,))
    with pytest.raises(ValueError):
        cs.ConicProgram(c=[0, np.nan], A=np.zeros((0, 2)), b=[], G=[[1, 0]], h=[1], l=1)


def test_residuals_by_direct_arithmetic():
    P = abs_epigraph()
    feasible = cs.residuals(P, [5.0, 2.5])
    assert feasible.eq == 0.0 and feasible.orthant == 0.0 and feasible.soc == 0.0
    rng = np.random.default_rng(3)
    x = rng.normal(size=2)
    r = cs.residuals(P, x)
    s = P.h - P.G @ x
    assert r.eq == pytest.approx(abs(x[0] - 5.0))
    assert r.orthant == pytest.approx(max(0.0, -s.min()))
    assert r.objective == pytest.approx(x[1])
    Q = outside_disc()
    r = cs.residuals(Q, [2.0, 0.0])
    assert r.soc == pytest.approx(1.0)


def planner_program(N=12, v0=24.0):
    stages = sp.build_stages(u_turn(), VehicleParams(), 0.0, 40.0, 140.0, N)
    return sp.assemble_program(stages, v0)[0]


def test_reported_gap_matches_external_computation():
    prog = planner_program()
    sol = cs.solve(prog)
    assert sol.status == cs.OPTIMAL
    external = prog.c @ sol.x + prog.b @ sol.y + prog.h @ sol.z
    assert sol.gap == pytest.approx(external, abs=1e-9)
    assert sol.residuals.gap == pytest.approx(external, abs=1e-9)


def test_deterministic_iterates():
    prog = planner_program()
    a, b = cs.solve(prog), cs.solve(prog)
    assert a.iterations == b.iterations
    for name in ("x", "y", "z", "s"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_unit_change_scales_objective_only():
    """Grams instead of kilograms multiply every force by 1e3.

    The optimal speeds are not unique where no intervention is needed, so the
    check is on the objective and on cross-feasibility of the two solutions.
    """
    p = VehicleParams()
    big = VehicleParams(m=p.m * 1e3, I1=p.I1 * 1e3, I2=p.I2 * 1e3, I3=p.I3 * 1e3)
    road = u_turn()
    prog, _ = sp.assemble_program(sp.build_stages(road, p, 0.0, 30.0, 130.0, 40, -2000.0), 25.0)
    big_prog, _ = sp.assemble_program(sp.build_stages(road, big, 0.0, 30.0, 130.0, 40, -2e6), 25.0)
    base, scaled = cs.solve(prog), cs.solve(big_prog)
    assert base.status == scaled.status == cs.OPTIMAL
    assert scaled.residuals.certified()
    assert scaled.primal_objective == pytest.approx(1e3 * base.primal_objective, rel=1e-7)
    x = base.x.copy()
    x[2::sp.NVAR] *= 1e3
    assert cs.residuals(big_prog, x).cone_scaled < 1e-7


@pytest.mark.parametrize("case", range(5))
def test_random_instances_match_reference(case):
    _, stages, v0 = random_cases(5)[case]
    prof = sp.solve_profile(stages, v0)
    ref = reference_solve(stages, v0)
    assert ref.feasible
    assert prof.objective == pytest.approx(ref.objective, rel=1e-4, abs=1e-4)
    assert prof.residuals.certified(1e-7)


def test_presolve_keeps_solution():
    prog = planner_program(8)
    a = cs.solve(prog)
    b = cs.solve(prog, presolve=False)
    assert a.status == b.status == cs.OPTIMAL
    assert a.primal_objective == pytest.approx(b.primal_objective, rel=1e-6, abs=1e-6)


def test_json_round_trip(tmp_path):
    prog = planner_program(5)
    back = cs.ConicProgram.from_dict(json.loads(json.dumps(prog.to_dict())))
    for name in ("c", "A", "b", "G", "h"):
        assert np.array_equal(getattr(prog, name), getattr(back, name))
    assert (back.l, back.q, back.names) == (prog.l, prog.q, prog.names)
    sol = cs.solve(back)
    cs.dump_solution(sol, tmp_path / "sol.json")
    doc = json.loads((tmp_path / "sol.json").read_text())
    assert doc["status"] == cs.OPTIMAL and len(doc["x"]) == prog.n

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from nonplanar_brake import cli, config
from nonplanar_brake import conic_solver as cs
from nonplanar_brake import speed_planner as sp
from nonplanar_brake.errors import ConfigError
from nonplanar_brake.road_surface import RoadSurface


def scenarios_dir():
    return config.data_path("scenarios")


def write(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def plane_scenario(tmp_path):
    road = write(tmp_path / "road.json", RoadSurface.plane(100.0, 4.0).to_dict())
    return write(tmp_path / "sc.json", {"road": road.name, "v0": 15.0, "N": 8, "s_end": 80.0})


def test_shipped_scenarios_load():
    paths = config.shipped_scenarios()
    assert len(paths) >= 7
    for path in paths:
        sc = config.load_scenario(path)
        assert sc.road is not None and sc.vehicle is not None
        assert sc.base == path.parent


def test_shipped_vehicle_is_the_default(params):
    assert config.load_vehicle(config.data_path("vehicles", "sedan.json")) == params


def test_unknown_scenario_field_rejected(tmp_path):
    path = write(tmp_path / "sc.json", {"v0": 10.0, "speed_limit": 3})
    with pytest.raises(ConfigError, match="speed_limit"):
        config.load_scenario(path)


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "v0": 10.0,\n  "N": ,\n}')
    with pytest.raises(ConfigError, match=r"line 3, column 8"):
        config.read_json(path)


def test_missing_referenced_file(tmp_path):
    path = write(tmp_path / "sc.json", {"v0": 10.0, "road": "nowhere.json"})
    with pytest.raises(ConfigError, match="not found"):
        config.load_scenario(path)


def test_road_documents_validated(tmp_path):
    with pytest.raises(ConfigError):
        config.road_from_doc({"kind": "moebius"})
    good = RoadSurface.crest(100.0, 60.0, 4.0, 30.0).to_dict()
    assert config.road_from_doc(good).to_dict() == good
    with pytest.raises(ConfigError):
        config.road_from_doc({**good, "half_width": -1.0})


def test_inline_road_and_outputs(tmp_path):
    doc = {"road": RoadSurface.plane(50.0, 4.0).to_dict(), "v0": 5.0,
           "outputs": {"csv": "out/p.csv", "summary": "out/s.json"}}
    sc = config.scenario_from_doc(doc, tmp_path)
    assert cli._out_path(None, sc, "csv") == tmp_path / "out/p.csv"
    assert cli._out_path("x.csv", sc, "csv").name == "x.csv"


def test_plan_writes_csv(tmp_path, plane_scenario, capsys):
    out = tmp_path / "p.csv"
    code = cli.main(["plan", "--scenario", str(plane_scenario), "--out", str(out)])
    assert code == cli.EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["status"] == cs.OPTIMAL
    rows = sp.read_profile_csv(out)
    assert len(rows) == 8 and list(rows[0]) == list(sp.CSV_COLUMNS)


def test_plan_on_shipped_uturn_intervenes(tmp_path, capsys):
    out = tmp_path / "u.csv"
    code = cli.main(["--no-meta", "plan", "--scenario", str(scenarios_dir() / "u_turn_plan.json"),
                     "--out", str(out)])
    assert code == cli.EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["interventions"] > 0 and summary["objective"] > 0


def test_no_meta_outputs_are_byte_identical(tmp_path, plane_scenario, capsys):
    texts = []
    for name in ("a.csv", "b.csv"):
        cli.main(["--no-meta", "plan", "--scenario", str(plane_scenario), "--out", str(tmp_path / name)])
        texts.append(capsys.readouterr().out)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    # stdout differs only in the csv path
    a, b = (json.loads(t) for t in texts)
    a.pop("csv"), b.pop("csv")
    assert a == b


def test_meta_line_present_by_default(tmp_path, plane_scenario, capsys):
    out = tmp_path / "p.csv"
    cli.main(["plan", "--scenario", str(plane_scenario), "--out", str(out)])
    assert out.read_text().startswith("# nonplanar_brake ")
    assert "meta" in json.loads(capsys.readouterr().out)


def test_bad_json_exit_code(tmp_path, capsys):
    path = tmp_path / "sc.json"
    path.write_text("{ not json")
    assert cli.main(["plan", "--scenario", str(path)]) == cli.EXIT_CONFIG
    assert "line 1" in capsys.readouterr().err


def test_out_of_domain_is_a_config_error(tmp_path, capsys):
    road = write(tmp_path / "road.json", RoadSurface.plane(100.0, 4.0).to_dict())
    path = write(tmp_path / "sc.json", {"road": road.name, "v0": 15.0, "s_end": 500.0})
    assert cli.main(["plan", "--scenario", str(path)]) == cli.EXIT_CONFIG


def test_infeasible_plan_exit_code(tmp_path, capsys):
    road = write(tmp_path / "road.json", RoadSurface.crest(100.0, 60.0, 4.0, 30.0).to_dict())
    path = write(tmp_path / "sc.json", {"road": road.name, "v0": 1.2 * math.sqrt(981.0), "N": 20,
                                        "s_start": 20.0, "s_end": 40.0})
    assert cli.main(["plan", "--scenario", str(path)]) == cli.EXIT_INFEASIBLE
    assert "stage 0" in capsys.readouterr().err


def _program(tmp_path, infeasible=False):
    # minimise t subject to t >= |x - 5|, with x fixed to 3 (or an impossible disc)
    if infeasible:
        doc = {"c": [0.0, 0.0], "G": [[0.0, 0.0], [-1.0, 0.0], [0.0, -1.0]], "h": [-1.0, 0.0, 0.0],
               "cones": {"l": 0, "q": [3]}}
    else:
        doc = {"c": [0.0, 1.0], "A": [[1.0, 0.0]], "b": [3.0],
               "G": [[1.0, -1.0], [-1.0, -1.0]], "h": [5.0, -5.0], "cones": {"l": 2}}
    return write(tmp_path / "prog.json", doc)


def test_solve_conic_optimal(tmp_path, capsys):
    out = tmp_path / "sol.json"
    code = cli.main(["--no-meta", "solve-conic", "--in", str(_program(tmp_path)), "--out", str(out)])
    assert code == cli.EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["primal_objective"] == pytest.approx(2.0, abs=1e-7)
    sol = json.loads(out.read_text())
    assert sol["x"] == pytest.approx([3.0, 2.0], abs=1e-7)


def test_solve_conic_infeasible(tmp_path, capsys):
    code = cli.main(["solve-conic", "--in", str(_program(tmp_path, infeasible=True))])
    assert code == cli.EXIT_INFEASIBLE


def test_solve_conic_iteration_limit(tmp_path, capsys):
    code = cli.main(["solve-conic", "--in", str(_program(tmp_path)), "--max-iter", "1"])
    assert code == cli.EXIT_SOLVER


def test_solve_conic_schema_error(tmp_path, capsys):
    path = write(tmp_path / "p.json", {"c": [1.0], "cones": {"l": 0}})
    assert cli.main(["solve-conic", "--in", str(path)]) == cli.EXIT_CONFIG


def test_check_surface(tmp_path, capsys):
    path = config.data_path("roads", "u_turn_offcamber.json")
    assert cli.main(["--no-meta", "check-surface", "--road", str(path), "--grid", "6x3"]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["passed"]
    assert cli.main(["check-surface", "--road", str(path), "--grid", "six"]) == cli.EXIT_CONFIG
    # a tolerance below the difference error cannot pass
    assert cli.main(["check-surface", "--road", str(path), "--tol", "1e-16"]) == cli.EXIT_CHECK


def test_simulate_expectation_and_outputs(tmp_path, capsys):
    sc = scenarios_dir() / "plane_plan.json"
    out = tmp_path / "run.csv"
    assert cli.main(["--no-meta", "simulate", "--scenario", str(sc), "--out", str(out)]) == cli.EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["completed"] and summary["expected"] == "complete"
    assert out.read_text().splitlines()[0].startswith("t,s,y")


def test_simulate_scenario_failure_exit_code(tmp_path, capsys):
    road = write(tmp_path / "road.json", RoadSurface.plane(100.0, 4.0).to_dict())
    # a car that completes a straight cannot meet a "depart" expectation
    path = write(tmp_path / "sc.json", {"road": road.name, "v0": 15.0, "expect": "depart"})
    assert cli.main(["simulate", "--scenario", str(path)]) == cli.EXIT_SCENARIO


def test_scenario_outputs_resolved_next_to_scenario(tmp_path, capsys):
    road = write(tmp_path / "road.json", RoadSurface.plane(100.0, 4.0).to_dict())
    path = write(tmp_path / "sc.json", {"road": road.name, "v0": 15.0, "N": 5, "s_end": 50.0,
                                        "outputs": {"csv": "p.csv", "summary": "p.json"}})
    assert cli.main(["--no-meta", "plan", "--scenario", str(path)]) == cli.EXIT_OK
    assert json.loads((tmp_path / "p.json").read_text()) == json.loads(capsys.readouterr().out)
    assert len(sp.read_profile_csv(tmp_path / "p.csv")) == 5


def test_bench_single_row(capsys):
    assert cli.main(["bench", "--only", "2"]) == cli.EXIT_OK
    assert "PASS" in capsys.readouterr().out
    assert cli.main(["bench", "--only", "99"]) == cli.EXIT_CONFIG


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert "nonplanar-brake" in capsys.readouterr().out


def test_paper_literal_flag_changes_plan(tmp_path, capsys):
    road = write(tmp_path / "road.json", RoadSurface.plane(100.0, 4.0).to_dict())
    path = write(tmp_path / "sc.json", {"road": road.name, "v0": 5.0, "N": 2, "s_end": 10.0,
                                        "B_profile": -3000.0})
    objs = []
    for flag in ([], ["--paper-literal"]):
        assert cli.main(["--no-meta", *flag, "plan", "--scenario", str(path)]) == cli.EXIT_OK
        objs.append(json.loads(capsys.readouterr().out)["objective"])
    # halving the update weight lets the same v^2 budget absorb twice the deceleration
    np.testing.assert_allclose(objs, [2250.0, 0.0], atol=1e-4)

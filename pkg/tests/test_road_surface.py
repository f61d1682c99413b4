from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonplanar_brake.errors import OutOfDomain
from nonplanar_brake.road_surface import (
    RoadSurface, check_surface, eval_jet, fd_jet, fundamental_forms, lane_arclength, rot2,
    surface_frame,
)

unit = st.floats(0.0, 1.0)


def test_plane_jet_is_flat(plane):
    jet = eval_jet(plane, 37.0, -1.5)
    np.testing.assert_allclose(jet.x, [37.0, -1.5, 0.0], atol=1e-12)
    for d in (jet.x_ss, jet.x_sy, jet.x_yy):
        np.testing.assert_array_equal(d, 0.0)
    np.testing.assert_allclose(jet.e_n, [0, 0, 1], atol=1e-15)


def test_crest_normal_curvature_at_apex():
    road = RoadSurface.crest(100.0, s_max=30.0)
    jet = eval_jet(road, 0.0, 0.0)
    assert jet.x_ss @ jet.e_n == pytest.approx(-0.01, rel=1e-12)
    II = fundamental_forms(jet).II
    assert II[0, 0] == pytest.approx(-0.01, rel=1e-12)
    assert abs(II[0, 1]) < 1e-15 and abs(II[1, 1]) < 1e-15


def test_banked_arc_jet_matches_finite_differences():
    road = RoadSurface.banked_arc(50.0, 30.0)
    jet = eval_jet(road, 10.0, 1.0)
    fd = fd_jet(road, 10.0, 1.0, 1e-5)
    for name in ("x_s", "x_y", "x_ss", "x_sy", "x_yy", "e_n"):
        ref = fd[name]
        err = np.linalg.norm(getattr(jet, name) - ref) / max(np.linalg.norm(ref), 1e-2)
        assert err < 1e-6, name
    np.testing.assert_allclose(jet.x_sy, fd["x_ys"], rtol=1e-6, atol=1e-8)


def test_banked_arc_forms_match_finite_differences():
    road = RoadSurface.banked_arc(50.0, 30.0)
    jet = eval_jet(road, 10.0, 1.0)
    fd = fd_jet(road, 10.0, 1.0)
    forms = fundamental_forms(jet)
    I_fd = np.array([[fd["x_s"] @ fd["x_s"], fd["x_s"] @ fd["x_y"]],
                     [fd["x_y"] @ fd["x_s"], fd["x_y"] @ fd["x_y"]]])
    II_fd = np.array([[fd["x_ss"] @ fd["e_n"], fd["x_sy"] @ fd["e_n"]],
                      [fd["x_ys"] @ fd["e_n"], fd["x_yy"] @ fd["e_n"]]])
    np.testing.assert_allclose(forms.I, I_fd, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(forms.II, II_fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("name", ["plane", "crest", "banked", "uturn", "hill"])
def test_check_surface_grid(shipped_roads, name):
    worst = check_surface(shipped_roads[name], 20, 5)
    assert worst["max"] < 1e-6


@pytest.mark.parametrize("name", ["plane", "crest", "banked", "uturn", "hill"])
@given(u=unit, v=unit)
def test_jet_invariants(shipped_roads, name, u, v):
    road = shipped_roads[name]
    s, y = u * road.s_max, (2 * v - 1) * road.half_width
    jet = eval_jet(road, s, y, position=False)
    assert abs(jet.e_n @ jet.x_s) < 1e-10 and abs(jet.e_n @ jet.x_y) < 1e-10
    assert np.linalg.norm(jet.e_n) == pytest.approx(1.0, abs=1e-12)
    assert jet.e_n[2] > 0  # upward on every shipped road
    forms = fundamental_forms(jet)
    assert np.all(np.linalg.eigvalsh(forms.I) > 0)
    assert abs(forms.II[0, 1] - forms.II[1, 0]) < 1e-12
    assert np.linalg.norm(np.cross(jet.x_s, jet.x_y)) > 0


@pytest.mark.parametrize("name", ["plane", "crest", "banked", "uturn", "hill"])
@given(u=unit, v=unit, theta=st.floats(-math.pi, math.pi))
def test_frame_identities(shipped_roads, name, u, v, theta):
    road = shipped_roads[name]
    s, y = u * road.s_max, (2 * v - 1) * road.half_width
    jet = eval_jet(road, s, y, position=False)
    frame = surface_frame(jet, theta)
    forms = fundamental_forms(jet)
    np.testing.assert_allclose(frame.J, frame.Q @ rot2(theta), atol=1e-12)
    np.testing.assert_allclose(frame.J @ frame.J.T, forms.I, atol=1e-10)
    np.testing.assert_allclose(frame.R_gb.T @ frame.R_gb, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(frame.R_gb[:, 2], jet.e_n, atol=1e-15)
    detQ = np.linalg.det(frame.Q)
    ref = np.linalg.norm(jet.x_s) * np.linalg.norm(jet.x_y) * math.cos(frame.theta_p)
    assert detQ == pytest.approx(ref, rel=1e-12) and detQ > 0


def test_plane_frame():
    road = RoadSurface.plane()
    jet = eval_jet(road, 5.0, 0.0)
    f0 = surface_frame(jet, 0.0)
    assert f0.theta_p == 0.0
    np.testing.assert_allclose(f0.Q, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(f0.J, np.eye(2), atol=1e-15)
    f1 = surface_frame(jet, math.pi / 2)
    np.testing.assert_allclose(f1.J, [[0, -1], [1, 0]], atol=1e-15)


def test_special_cases_agree_with_ribbon():
    arc = RoadSurface.banked_arc(50.0, 0.0, math.pi / 2)
    rib = RoadSurface.ribbon(arc.s_max, 5.0, [0.0, arc.s_max], [0.02, 0.02], [0, 0], [0, 0])
    flat = RoadSurface.plane(60.0)
    level = RoadSurface.ribbon(60.0, 5.0, [0.0, 30.0, 60.0], [0, 0, 0], [0, 0, 0], [0, 0, 0])
    for s in (0.0, 13.7, 40.1, 60.0):
        for y in (-3.0, 0.0, 2.5):
            for a, b in ((arc, rib), (flat, level)):
                ja, jb = eval_jet(a, s, y), eval_jet(b, s, y)
                for name in ("x", "x_s", "x_y", "x_ss", "x_sy", "x_yy", "e_n"):
                    np.testing.assert_allclose(getattr(ja, name), getattr(jb, name), atol=1e-12)


def test_profiles_are_c2_at_knots(uturn):
    for pp in (uturn._bank_pp, uturn._grade_pp, uturn._psi_pp.derivative()):
        for k in uturn.knots_s[1:-1]:
            for d in range(3):
                lo, hi = pp(k - 1e-9, d), pp(k + 1e-9, d)
                assert abs(hi - lo) < 1e-6 * max(1.0, abs(lo))


def test_out_of_domain(plane):
    with pytest.raises(OutOfDomain):
        eval_jet(plane, 1.0, 4.5)
    with pytest.raises(OutOfDomain):
        eval_jet(plane, -1.0, 0.0)


def test_lane_arclength_closed_forms():
    assert lane_arclength(RoadSurface.plane(), 0.0, 0.0, 10.0) == 10.0
    arc = RoadSurface.banked_arc(50.0, 30.0)
    assert lane_arclength(arc, 0.0, 0.0, arc.s_max) == pytest.approx(math.pi * 50, rel=1e-12)
    # the offset lane is a circle of radius R - y cos(phi)
    phi = math.atan(0.3)
    ref = math.pi * (50.0 - 2.0 * math.cos(phi))
    assert lane_arclength(arc, 2.0, 0.0, arc.s_max) == pytest.approx(ref, rel=1e-9)


def test_lane_arclength_matches_polyline(hill):
    s = np.linspace(20.0, 180.0, 20001)
    pts = np.array([eval_jet(hill, si, 1.5).x for si in s])
    poly = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
    assert lane_arclength(hill, 1.5, 20.0, 180.0) == pytest.approx(poly, rel=1e-8)


def test_dict_round_trip(shipped_roads):
    for road in shipped_roads.values():
        back = RoadSurface.from_dict(road.to_dict())
        ja, jb = eval_jet(road, 17.0, 0.3), eval_jet(back, 17.0, 0.3)
        np.testing.assert_allclose(ja.x, jb.x, atol=1e-12)
        np.testing.assert_allclose(ja.x_ss, jb.x_ss, atol=1e-12)


def test_invalid_roads():
    with pytest.raises(ValueError):
        RoadSurface.ribbon(10.0, 2.0, [0.0, 5.0], [0, 0], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        RoadSurface.crest(-5.0)
    with pytest.raises(ValueError):
        RoadSurface.ribbon(10.0, 2.0, [0.0, 6.0, 5.0, 10.0], [0] * 4, [0] * 4, [0] * 4)

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonplanar_brake import kinematics as kin
from nonplanar_brake.affine import AffineScalar, refit
from nonplanar_brake.road_surface import RoadSurface, eval_jet, fundamental_forms, surface_frame

unit = st.floats(0.0, 1.0)


def pose(road, s, y, theta=0.0):
    jet = eval_jet(road, s, y)
    return jet, fundamental_forms(jet), surface_frame(jet, theta)


def com(road, s, y, n):
    jet = eval_jet(road, s, y)
    return jet.x + n * jet.e_n


def test_plane_coordinate_rates(plane):
    jet, forms, frame = pose(plane, 10.0, 0.0)
    assert kin.coordinate_rates(frame, forms, 0.5, 10.0, 0.0) == pytest.approx((10.0, 0.0))
    _, forms, frame = pose(plane, 10.0, 0.0, math.pi / 2)
    sd, yd = kin.coordinate_rates(frame, forms, 0.5, 10.0, 0.0)
    assert sd == pytest.approx(0.0, abs=1e-12) and yd == pytest.approx(10.0)


def test_crest_coordinate_rate_matches_world_velocity():
    road = RoadSurface.crest(100.0, s_max=30.0, apex_s=15.0)
    n, v = 0.5, 10.0
    _, forms, frame = pose(road, 15.0, 0.0)
    sd, yd = kin.coordinate_rates(frame, forms, n, v, 0.0)
    # the point at height n moves |d(x + n e_n)/ds| per unit s
    h = 1e-4
    speed_per_s = np.linalg.norm(com(road, 15 + h, 0.0, n) - com(road, 15 - h, 0.0, n)) / (2 * h)
    assert sd == pytest.approx(v / speed_per_s, rel=1e-6)
    assert sd == pytest.approx(v / (1 + n / 100.0), rel=1e-9)
    assert yd == pytest.approx(0.0, abs=1e-12)


def rotation_rates(road, s, y, sd, yd, h=1e-4):
    """Body angular velocity of the theta_s = 0 frame moving with (sd, yd), by differences."""
    def R(a):
        return surface_frame(eval_jet(road, s + a * sd, y + a * yd, position=False), 0.0).R_gb
    R0 = R(0.0)
    W = R0.T @ (R(h) - R(-h)) / (2 * h)
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def test_crest_pitch_rate():
    road = RoadSurface.crest(100.0, s_max=30.0, apex_s=15.0)
    _, forms, frame = pose(road, 15.0, 0.0)
    w1, w2 = kin.tangent_angular_velocity(frame, forms, 0.0, 10.0, 0.0)
    # nose drops over the crest: rotation about the body's left axis is positive
    assert w2 == pytest.approx(0.1, rel=1e-12)
    assert w1 == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(rotation_rates(road, 15.0, 0.0, 10.0, 0.0), [0.0, 0.1, 0.0],
                               atol=1e-7)


def test_crest_along_rulings_has_no_rotation():
    road = RoadSurface.crest(100.0, s_max=30.0, apex_s=15.0)
    _, forms, frame = pose(road, 5.0, 0.0, math.pi / 2)
    w = kin.tangent_angular_velocity(frame, forms, 0.55, 10.0, 0.0)
    np.testing.assert_allclose(w, 0.0, atol=1e-14)


def test_plane_has_no_rotation(plane):
    _, forms, frame = pose(plane, 3.0, 1.0, 0.4)
    assert kin.tangent_angular_velocity(frame, forms, 0.5, 12.0, 0.1) == (0.0, 0.0)
    jet = eval_jet(plane, 3.0, 1.0)
    assert kin.theta_s_rate_terms(jet) == (0.0, 0.0)


@pytest.mark.parametrize("name", ["crest", "banked", "uturn", "hill"])
def test_lane_following_rates_match_world_rotation(shipped_roads, name):
    """Integrating the coordinate rates moves the body frame at the reported rates."""
    road = shipped_roads[name]
    for s in np.linspace(0.1, 0.9, 5) * road.s_max:
        jet, forms, frame = pose(road, float(s), 0.5)
        r = kin.body_rates(jet, forms, frame, 0.0, kin.VelocityParam(10.0))
        fd = rotation_rates(road, float(s), 0.5, r.s_dot, r.y_dot)
        np.testing.assert_allclose([r.w1, r.w2, r.w3], fd, atol=1e-4)


def test_flat_arc_heading_terms():
    road = RoadSurface.banked_arc(50.0, 0.0)
    jet = eval_jet(road, 20.0, 0.0)
    a_s, a_y = kin.theta_s_rate_terms(jet)
    assert a_s == pytest.approx(-1 / 50, rel=1e-12)
    assert a_y == pytest.approx(0.0, abs=1e-15)
    _, forms, frame = pose(road, 20.0, 0.0)
    sd, yd = kin.coordinate_rates(frame, forms, 0.0, 10.0, 0.0)
    assert kin.omega3(0.0, 10.0, sd, yd, (a_s, a_y)) == pytest.approx(0.2, rel=1e-12)
    assert kin.omega3(0.0, 0.0, 0.0, 0.0, (a_s, a_y)) == 0.0


def heading_rate_fd(road, s, y, sd, yd, h=1e-5):
    """Rotation rate of e_s about the normal when moving with (sd, yd)."""
    def e_s(a):
        xs = eval_jet(road, s + a * sd, y + a * yd, position=False).x_s
        return xs / np.linalg.norm(xs)
    jet = eval_jet(road, s, y, position=False)
    de = (e_s(h) - e_s(-h)) / (2 * h)
    return float(np.cross(jet.e_n, e_s(0.0)) @ de)


@pytest.mark.parametrize("name", ["banked", "uturn", "hill"])
def test_heading_terms_match_finite_difference(shipped_roads, name):
    """Holding theta_s = 0 needs w3 = -(a_s s_dot + a_y y_dot); lateral motion included."""
    road = shipped_roads[name]
    for s in np.linspace(0.2, 0.8, 4) * road.s_max:
        jet = eval_jet(road, float(s), 1.0, position=False)
        a_s, a_y = kin.theta_s_rate_terms(jet)
        for sd, yd in ((10.0, 0.0), (0.0, 1.0), (8.0, -2.0)):
            ref = heading_rate_fd(road, float(s), 1.0, sd, yd)
            assert -(a_s * sd + a_y * yd) == pytest.approx(ref, abs=1e-6)


def test_x_yy_heading_term_differs_under_lateral_motion(uturn):
    s = 110.0  # inside the bank ramp, where the bank varies
    jet = eval_jet(uturn, s, 1.0, position=False)
    ref = heading_rate_fd(uturn, s, 1.0, 0.0, 1.0)
    mixed = -kin.theta_s_rate_terms(jet)[1]
    with_yy = -kin.theta_s_rate_terms(jet, use_x_yy=True)[1]
    assert mixed == pytest.approx(ref, abs=1e-6)
    assert with_yy == 0.0  # ribbons are straight across, so x_yy vanishes
    # both forms coincide while following the lane
    assert kin.theta_s_rate_terms(jet)[0] == kin.theta_s_rate_terms(jet, use_x_yy=True)[0]


def test_body_accels_examples():
    a1, a2 = kin.body_accels(0.0, 0.0)
    assert a1 == AffineScalar(0.0, 0.0, 1.0) and a2.value(100.0, 3.0) == 0.0
    _, a2 = kin.body_accels(0.0, 0.01)
    assert a2.value(100.0, 0.0) == pytest.approx(1.0)


@given(beta=st.floats(-1.0, 1.0), kb=st.floats(-0.05, 0.05), v=st.floats(1.0, 30.0),
       vd=st.floats(-8.0, 4.0))
def test_body_accels_match_differentiated_velocity(beta, kb, v, vd):
    """d/dt (v cos beta, v sin beta) with v' = vd and beta' = kb v."""
    h = 1e-6

    def vel(t):
        vt, bt = v + vd * t, beta + kb * v * t + 0.5 * kb * vd * t * t
        return np.array([vt * math.cos(bt), vt * math.sin(bt)])
    fd = (vel(h) - vel(-h)) / (2 * h)
    a1, a2 = kin.body_accels(beta, kb)
    np.testing.assert_allclose([a1.value(v * v, vd), a2.value(v * v, vd)], fd, atol=1e-6)


def test_crest_angular_accel_uses_curvature_map():
    road = RoadSurface.crest(100.0, s_max=30.0, apex_s=15.0)
    _, forms, frame = pose(road, 15.0, 0.0)
    w1d, w2d = kin.angular_accels(frame, forms, 0.55, kin.body_accels(0.0, 0.0))
    M = kin.curvature_map(frame, forms, 0.55)
    assert w2d.value(0.0, 1.0) == pytest.approx(-M[0, 0], rel=1e-12)
    assert w1d.value(0.0, 1.0) == pytest.approx(M[1, 0], abs=1e-15)
    assert w2d.value(0.0, 0.0) == 0.0 and w1d.value(0.0, 0.0) == 0.0
    _, forms, frame = pose(RoadSurface.plane(), 1.0, 0.0)
    assert kin.angular_accels(frame, forms, 0.55, (1.0, 2.0)) == (0.0, 0.0)


@pytest.mark.parametrize("name", ["crest", "banked", "uturn", "hill"])
@given(u=unit, v=unit, theta=st.floats(-1.0, 1.0), beta=st.floats(-0.3, 0.3),
       speed=st.floats(0.5, 40.0), lam=st.floats(-3.0, 3.0))
def test_velocity_quantities_are_linear_in_speed(shipped_roads, name, u, v, theta, beta, speed,
                                                 lam):
    road = shipped_roads[name]
    s, y = u * road.s_max, (2 * v - 1) * road.half_width
    jet, forms, frame = pose(road, s, y, theta)
    base = kin.body_rates(jet, forms, frame, 0.55, kin.VelocityParam(speed, beta, 0.01, -0.02))
    scaled = kin.body_rates(jet, forms, frame, 0.55,
                            kin.VelocityParam(lam * speed, beta, 0.01, -0.02))
    for f in ("s_dot", "y_dot", "w1", "w2", "w3"):
        assert getattr(scaled, f) == pytest.approx(lam * getattr(base, f), rel=1e-12, abs=1e-13)


@pytest.mark.parametrize("name", ["crest", "banked", "hill"])
@given(u=unit, beta=st.floats(-0.3, 0.3), kb=st.floats(-0.05, 0.05))
def test_angular_accels_are_affine(shipped_roads, name, u, beta, kb):
    road = shipped_roads[name]
    jet, forms, frame = pose(road, u * road.s_max, 0.7)
    stored = kin.angular_accels(frame, forms, 0.55, kin.body_accels(beta, kb))

    def numeric(i):
        def fn(v2, vd):
            a1, a2 = kin.body_accels(beta, kb)
            return kin.angular_accels(frame, forms, 0.55, (a1(v2, vd), a2(v2, vd)))[i]
        return fn
    for i in range(2):
        assert refit(numeric(i)).isclose(stored[i], 1e-12)

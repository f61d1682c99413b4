"""Shipped roads and scenarios."""

from __future__ import annotations

import math

import numpy as np

from .road_surface import RoadSurface


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


def u_turn(radius: float = 50.0, bank_percent: float = -30.0, approach: float = 60.0,
           exit_length: float = 40.0, ramp: float = 12.0, half_width: float = 4.0) -> RoadSurface:
    """Straight, 180 degree left turn, straight.

    Curvature and bank blend in over ``ramp`` metres on both sides of the
    turn. Negative ``bank_percent`` is off-camber: the outside edge is lower.
    """
    arc = math.pi * radius
    # the ramps shorten the constant-curvature part so the heading change stays pi
    core = arc - ramp
    s1 = approach
    s2 = s1 + ramp
    s3 = s2 + core
    s4 = s3 + ramp
    s_max = s4 + exit_length
    step = ramp / 12.0
    knots = sorted(set(
        np.linspace(0.0, s1, max(2, int(s1 // 10) + 1)).tolist()
        + np.arange(s1, s2 + 1e-9, step).tolist()
        + np.linspace(s2, s3, max(2, int(core // 10) + 1)).tolist()
        + np.arange(s3, s4 + 1e-9, step).tolist()
        + np.linspace(s4, s_max, max(2, int(exit_length // 10) + 1)).tolist()))
    knots = np.array(knots)
    weight = _smoothstep((knots - s1) / ramp) - _smoothstep((knots - s3) / ramp)
    kappa = weight / radius
    bank = weight * math.atan(bank_percent / 100.0)
    return RoadSurface.ribbon(s_max, half_width, knots, kappa, bank, np.zeros_like(knots))


def turn_span(road: RoadSurface, threshold: float = 0.5) -> tuple[float, float]:
    """s-interval where the curvature exceeds ``threshold`` of its peak."""
    k = np.abs(road.kappa_c)
    idx = np.flatnonzero(k >= threshold * k.max())
    return float(road.knots_s[idx[0]]), float(road.knots_s[idx[-1]])


def winding_hill(length: float = 240.0, half_width: float = 4.0) -> RoadSurface:
    """Hilly road with alternating bends whose bank and grade both vary.

    Built to exercise every profile at once; the bends are tight enough to
    matter at 20 m/s but stay inside the tire's reach on a dry road.
    """
    knots = np.linspace(0.0, length, 25)
    u = knots / length
    kappa = 0.02 * np.sin(2 * math.pi * 2 * u) * np.sin(math.pi * u)
    bank = 0.08 * np.sin(2 * math.pi * 2 * u + 0.4)
    grade = 0.06 * np.sin(2 * math.pi * 1.5 * u)
    return RoadSurface.ribbon(length, half_width, knots, kappa, bank, grade, heading0=0.3)

"""Pose kinematics of a body riding on a parametric surface.

Velocity-level quantities (coordinate rates and angular velocities) are
linear in the signed speed ``v``; acceleration-level quantities are returned
as :class:`AffineScalar` in ``(v**2, vdot)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .affine import AffineScalar
from .errors import SingularOffset
from .road_surface import FundamentalForms, SurfaceFrame, SurfaceJet


@dataclass(frozen=True)
class PoseState:
    s: float
    y: float
    n: float
    theta_s: float


@dataclass(frozen=True)
class VelocityParam:
    """Speed and the stage-frozen rates ``dtheta_s/dt = kappa_s v``, ``dbeta/dt = kappa_beta v``.

    The two-track model is only meaningful for ``|beta| < pi/2``.
    """

    v: float
    beta: float = 0.0
    kappa_s: float = 0.0
    kappa_beta: float = 0.0


@dataclass(frozen=True)
class BodyRates:
    s_dot: float
    y_dot: float
    w1: float
    w2: float
    w3: float
    w1_dot: AffineScalar
    w2_dot: AffineScalar


def _offset_metric(forms: FundamentalForms, n: float) -> np.ndarray:
    A = forms.I - n * forms.II
    if abs(np.linalg.det(A)) < 1e-12:
        raise SingularOffset(f"I - n II is singular at n={n}")
    return A


def rate_map(frame: SurfaceFrame, forms: FundamentalForms, n: float) -> np.ndarray:
    """Matrix taking body tangent velocity ``(v1, v2)`` to ``(s_dot, y_dot)``."""
    return np.linalg.solve(_offset_metric(forms, n), frame.J)


def curvature_map(frame: SurfaceFrame, forms: FundamentalForms, n: float) -> np.ndarray:
    """``J^-1 II (I - n II)^-1 J``: maps ``(v1, v2)`` to ``(-w2, w1)``."""
    return np.linalg.solve(frame.J, forms.II @ rate_map(frame, forms, n))


def body_velocity(v: float, beta: float) -> np.ndarray:
    return np.array([v * math.cos(beta), v * math.sin(beta)])


def coordinate_rates(frame, forms, n, v, beta) -> tuple[float, float]:
    sd, yd = rate_map(frame, forms, n) @ body_velocity(v, beta)
    return float(sd), float(yd)


def tangent_angular_velocity(frame, forms, n, v, beta) -> tuple[float, float]:
    """Roll and pitch rates ``(w1, w2)`` imposed by staying tangent to the surface."""
    m2, w1 = curvature_map(frame, forms, n) @ body_velocity(v, beta)
    return float(w1), float(-m2)


def theta_s_rate_terms(jet: SurfaceJet, use_x_yy: bool = False) -> tuple[float, float]:
    """Coefficients ``(a_s, a_y)`` with ``dtheta_s/dt = w3 + a_s s_dot + a_y y_dot``.

    By default ``a_y`` uses the mixed partial ``x_sy``, which is what the
    rotation of ``x_s`` about the normal actually depends on. ``use_x_yy=True``
    uses ``x_yy`` in its place; the two agree whenever ``y_dot = 0`` (lane
    following) but only the default matches a heading finite difference on
    banked ribbons with lateral motion.
    """
    xs, en = jet.x_s, jet.e_n
    g = xs @ xs
    a_s = float(np.cross(jet.x_ss, xs) @ en / g)
    second = jet.x_yy if use_x_yy else jet.x_sy
    a_y = float(np.cross(second, xs) @ en / g)
    return a_s, a_y


def omega3(kappa_s: float, v: float, s_dot: float, y_dot: float, terms) -> float:
    a_s, a_y = terms
    return kappa_s * v - a_s * s_dot - a_y * y_dot


def body_accels(beta: float, kappa_beta: float) -> tuple[AffineScalar, AffineScalar]:
    """Body-frame accelerations ``(dv1/dt, dv2/dt)`` using ``dbeta/dt = kappa_beta v``."""
    c, s = math.cos(beta), math.sin(beta)
    return (AffineScalar(0.0, -kappa_beta * s, c), AffineScalar(0.0, kappa_beta * c, s))


def angular_accels(frame, forms, n, accels) -> tuple[AffineScalar, AffineScalar]:
    """Approximate roll and pitch accelerations from the curvature map.

    ``accels`` may hold AffineScalars or plain numbers; the result has the
    same type.
    """
    M = curvature_map(frame, forms, n)
    a1, a2 = accels
    m2 = M[0, 0] * a1 + M[0, 1] * a2
    w1_dot = M[1, 0] * a1 + M[1, 1] * a2
    return w1_dot, -m2


def body_rates(jet: SurfaceJet, forms: FundamentalForms, frame: SurfaceFrame, n: float,
               vel: VelocityParam, theta_rate_x_yy: bool = False) -> BodyRates:
    sd, yd = coordinate_rates(frame, forms, n, vel.v, vel.beta)
    w1, w2 = tangent_angular_velocity(frame, forms, n, vel.v, vel.beta)
    w3 = omega3(vel.kappa_s, vel.v, sd, yd, theta_s_rate_terms(jet, theta_rate_x_yy))
    w1d, w2d = angular_accels(frame, forms, n, body_accels(vel.beta, vel.kappa_beta))
    return BodyRates(sd, yd, w1, w2, w3, w1d, w2d)

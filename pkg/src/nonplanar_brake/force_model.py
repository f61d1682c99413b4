"""Body forces, tire forces and per-wheel normal loads as affine functions.

Every quantity here is affine in ``(v**2, vdot)`` once the pose, sideslip and
the stage-frozen rates are fixed. The same functions accept plain floats, so
the simulator and the brake distribution reuse them numerically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import kinematics as kin
from .affine import V2, AffineScalar
from .errors import ConfigError
from .road_surface import FundamentalForms, SurfaceFrame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class VehicleParams:
    """Rigid-body vehicle data (SI units).

    ``t_f`` and ``t_r`` are half track widths. ``k_drag`` and ``k_lift`` lump
    ``rho * c * A / 2`` in kg/m; positive ``k_lift`` presses the car onto the
    road. The defaults describe a generic mid-size sedan and are configuration
    values, not measured data.
    """

    m: float = 1500.0
    I1: float = 600.0
    I2: float = 2200.0
    I3: float = 2500.0
    h: float = 0.55
    l_f: float = 1.2
    l_r: float = 1.4
    t_f: float = 0.75
    t_r: float = 0.75
    mu: float = 0.9
    g: float = 9.81
    k_drag: float = 0.0
    k_lift: float = 0.0

    def __post_init__(self):
        for name in ("m", "I1", "I2", "I3", "h", "l_f", "l_r", "t_f", "t_r", "g"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"vehicle parameter {name} must be positive")
        if not 0 < self.mu <= 2:
            raise ConfigError("mu must lie in (0, 2]")
        if self.k_drag < 0:
            raise ConfigError("k_drag must be nonnegative")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown vehicle fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class ForceSet:
    Fb: tuple  # body-frame net force (3 AffineScalar), N
    Kb: tuple  # roll and pitch moments (2 AffineScalar), N m
    Ft: tuple  # net tire force (3 AffineScalar), N
    KN: tuple  # moments carried by normal loads (2 AffineScalar), N m
    Fg: np.ndarray  # gravity in body axes, N


@dataclass(frozen=True)
class WheelNormals:
    N_fr: object
    N_fl: object
    N_rr: object
    N_rl: object
    delta: object
    N_f: object
    N_r: object

    def as_tuple(self) -> tuple:
        return (self.N_fr, self.N_fl, self.N_rr, self.N_rl)


def gravity_body(frame: SurfaceFrame, params: VehicleParams) -> np.ndarray:
    return params.m * frame.R_gb.T @ np.array([0.0, 0.0, -params.g])


def aero_force(params: VehicleParams, v2=V2) -> tuple:
    return (-params.k_drag * v2, 0.0 * v2, -params.k_lift * v2)


def body_forces(rates: kin.BodyRates, beta: float, accels, m: float) -> tuple:
    """Newton's law in body axes with the Coriolis terms.

    ``rates`` must be evaluated at unit speed: its velocity-level entries are
    then the per-``v`` coefficients, and every product of two of them lands
    in the ``v**2`` coefficient.
    """
    c, s = math.cos(beta), math.sin(beta)
    a1, a2 = accels
    F1 = m * a1 - (m * rates.w3 * s) * V2
    F2 = m * a2 + (m * rates.w3 * c) * V2
    F3 = (m * (rates.w1 * s - rates.w2 * c)) * V2
    return F1, F2, F3


def net_normal_force_quadratic(frame: SurfaceFrame, forms: FundamentalForms, n: float,
                               beta: float, m: float) -> AffineScalar:
    """Net normal body force written directly in the Q-R form; cross-checks ``body_forces``."""
    u = np.array([math.cos(beta + frame.theta_s), math.sin(beta + frame.theta_s)])
    A = forms.I - n * forms.II
    core = np.linalg.solve(frame.Q, forms.II @ np.linalg.solve(A, frame.Q @ u))
    return (m * float(u @ core)) * V2


def body_moments(rates: kin.BodyRates, params: VehicleParams) -> tuple:
    p = params
    K1 = p.I1 * rates.w1_dot + ((p.I3 - p.I2) * rates.w2 * rates.w3) * V2
    K2 = p.I2 * rates.w2_dot + ((p.I1 - p.I3) * rates.w3 * rates.w1) * V2
    for K in (K1, K2):
        if isinstance(K, AffineScalar) and K.c0 != 0.0:
            log.info("body moment has a constant term %.3e", K.c0)
    return K1, K2


def tire_forces(Fb, Fg, params: VehicleParams, v2=V2) -> tuple:
    Fa = aero_force(params, v2)
    return tuple(Fb[i] - Fg[i] - Fa[i] for i in range(3))


def normal_force_moments(Kb, Ft, params: VehicleParams) -> tuple:
    return Kb[0] - Ft[1] * params.h, Kb[1] + Ft[0] * params.h


def wheel_normals(KN, Ft3, params: VehicleParams, paper_literal: bool = False) -> WheelNormals:
    """Quasi-static split of the net normal force over the four wheels.

    Each axle load is shared by two wheels, so axle totals carry a factor 1/2
    and the four loads sum to ``Ft3``. ``paper_literal=True`` drops that
    factor, in which case the loads sum to ``2 Ft3``.
    """
    p = params
    L = p.l_f + p.l_r
    denom = L if paper_literal else 2.0 * L
    N_f = (Ft3 * p.l_r - KN[1]) / denom
    N_r = (Ft3 * p.l_f + KN[1]) / denom
    delta = KN[0] / (2.0 * (p.t_f ** 2 + p.t_r ** 2))
    return WheelNormals(
        N_fr=N_f - delta * p.t_f,
        N_fl=N_f + delta * p.t_f,
        N_rr=N_r - delta * p.t_r,
        N_rl=N_r + delta * p.t_r,
        delta=delta,
        N_f=N_f,
        N_r=N_r,
    )


def force_set(jet, forms, frame, n, vel: kin.VelocityParam, params: VehicleParams,
              theta_rate_x_yy: bool = False) -> tuple[ForceSet, kin.BodyRates]:
    """Assemble all affine forces and moments for a frozen pose.

    ``vel.v`` is ignored: rates are always evaluated at unit speed.
    """
    unit = kin.VelocityParam(1.0, vel.beta, vel.kappa_s, vel.kappa_beta)
    rates = kin.body_rates(jet, forms, frame, n, unit, theta_rate_x_yy)
    accels = kin.body_accels(vel.beta, vel.kappa_beta)
    Fb = body_forces(rates, vel.beta, accels, params.m)
    Kb = body_moments(rates, params)
    Fg = gravity_body(frame, params)
    Ft = tire_forces(Fb, Fg, params)
    KN = normal_force_moments(Kb, Ft, params)
    return ForceSet(Fb=Fb, Kb=Kb, Ft=Ft, KN=KN, Fg=Fg), rates

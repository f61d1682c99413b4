"""Electronic brakeforce distribution on nonplanar roads.

Wheel loads are estimated from an accelerometer: it reads proper
acceleration, i.e. every force on the car except gravity, so the tire forces
follow without knowing the road's orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import force_model as fm


@dataclass(frozen=True)
class ImuSample:
    a_proper: np.ndarray  # m/s^2, body axes
    omega: np.ndarray  # rad/s, body axes

    def __post_init__(self):
        a = np.asarray(self.a_proper, dtype=float).reshape(3)
        w = np.asarray(self.omega, dtype=float).reshape(3)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(w))):
            raise ValueError("IMU sample must be finite")
        object.__setattr__(self, "a_proper", a)
        object.__setattr__(self, "omega", w)


@dataclass
class BrakeAllocation:
    forces: np.ndarray  # per wheel, N, order fr, fl, rr, rl
    saturated: np.ndarray  # bool per wheel
    shortfall: float
    nonpositive_load: np.ndarray  # bool per wheel

    @property
    def total(self) -> float:
        return float(self.forces.sum())


def estimate_tire_forces(imu: ImuSample, params: fm.VehicleParams, speed: float = 0.0) -> np.ndarray:
    """Net tire force ``m a_proper - F_aero`` in body axes."""
    v2 = speed * speed
    aero = np.array([-params.k_drag * v2, 0.0, -params.k_lift * v2])
    return params.m * imu.a_proper - aero


@dataclass
class RateDifferentiator:
    """Causal derivative of the angular velocity through a first-order low-pass."""

    tau: float = 0.02
    _prev: np.ndarray | None = field(default=None, repr=False)
    value: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def update(self, omega, dt: float) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if self._prev is not None and dt > 0:
            raw = (omega - self._prev) / dt
            a = 1.0 - math.exp(-dt / self.tau)
            self.value = self.value + a * (raw - self.value)
        self._prev = omega.copy()
        return self.value


def estimate_wheel_normals(Ft, omega, omega_dot, params: fm.VehicleParams,
                           paper_literal: bool = False) -> np.ndarray:
    """Four wheel loads (fr, fl, rr, rl) from measured tire force and body rates."""
    p = params
    w1, w2, w3 = (float(x) for x in omega)
    wd1, wd2 = float(omega_dot[0]), float(omega_dot[1])
    K1 = p.I1 * wd1 + (p.I3 - p.I2) * w2 * w3
    K2 = p.I2 * wd2 + (p.I1 - p.I3) * w3 * w1
    KN = fm.normal_force_moments((K1, K2), (float(Ft[0]), float(Ft[1]), float(Ft[2])), p)
    return np.array(fm.wheel_normals(KN, float(Ft[2]), p, paper_literal).as_tuple(), dtype=float)


def allocate(F_target: float, normals, mu, caps=None, yaw_moment: float = 0.0,
             tol: float = 1e-9) -> BrakeAllocation:
    """Split a brake demand across wheels in proportion to load, then water-fill.

    Each wheel is limited by ``min(mu_i N_i, cap_i)``; whatever a clipped
    wheel cannot take is re-shared among the unclipped ones in proportion
    to their loads until nothing changes. Wheels with ``N_i <= 0`` get zero.
    Only the zero yaw-moment policy is implemented.
    """
    if yaw_moment != 0.0:
        raise NotImplementedError("only symmetric (zero yaw moment) allocation is supported")
    N = np.asarray(normals, dtype=float)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), N.shape)
    caps = np.full(N.shape, np.inf) if caps is None else np.broadcast_to(np.asarray(caps, float), N.shape)
    dead = N <= 0
    limit = np.where(dead, 0.0, np.minimum(mu * np.maximum(N, 0.0), caps))
    target = max(0.0, float(F_target))
    out = np.zeros_like(N)
    active = ~dead & (limit > 0)
    remaining = target
    while remaining > tol * max(1.0, target) and np.any(active):
        share = remaining * N * active / N[active].sum()
        room = limit - out
        clip = active & (share >= room - tol)
        if not np.any(clip):
            out += share
            remaining = 0.0
            break
        # wheels that would overflow take their remaining room and drop out
        out[clip] = limit[clip]
        remaining = target - out.sum()
        active &= ~clip
    saturated = ~dead & (out >= limit - tol * max(1.0, target))
    return BrakeAllocation(forces=out, saturated=saturated | dead, shortfall=max(0.0, target - out.sum()),
                           nonpositive_load=dead)

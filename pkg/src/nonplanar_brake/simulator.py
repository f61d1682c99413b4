"""Closed-loop vehicle simulation on a ribbon road.

A single rigid body rides on the surface at its centre-of-mass height. Tire
forces come from a combined-slip Pacejka model, wheel loads from quasi-static
load transfer, steering from a PI lane keeper and, optionally, braking from
the predictive safety planner via the brake distribution layer.

Surface geometry is evaluated once per physics step, at the midpoint the
previous step's rates predict; the vehicle states are integrated with RK4.
Over a 1 ms step the car moves a few centimetres, far below the length
scale on which the road geometry changes.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import ebd
from . import force_model as fm
from . import _vehicle_kernel as vk
from . import speed_planner as sp
from .errors import ConfigError, Infeasible, NumericalBlowup, OffRoad, SolverFailure
from .road_surface import RoadSurface, eval_jet, lane_arclength

log = logging.getLogger(__name__)

MODES = ("none", "delayed_driver", "safety_system", "safety_system_planar")
WHEELS = ("fr", "fl", "rr", "rl")


@dataclass(frozen=True)
class TireParams:
    """Pacejka coefficients; peak force is ``D_scale * mu * N``."""

    B: float = 10.0
    C: float = 1.9
    E: float = 0.97
    D_scale: float = 1.0

    def lateral(self, alpha: float, D: float) -> float:
        Ba = self.B * alpha
        return D * math.sin(self.C * math.atan(Ba - self.E * (Ba - math.atan(Ba))))


@dataclass(frozen=True)
class DriverParams:
    """PI lane keeper on lateral error plus heading and road-curvature terms.

    Angles are at the road wheels. The curvature term is the kinematic steer
    angle ``k_ff * wheelbase * kappa`` for the lane's horizontal curvature.
    """

    k_p: float = 0.08  # rad/m
    k_i: float = 0.04  # rad/(m s)
    k_theta: float = 0.6  # rad/rad
    integ_clamp: float = 5.0  # m s
    max_angle: float = 0.5  # rad
    max_rate: float = 1.0  # rad/s
    k_ff: float = 1.0

    def command(self, e: float, integ: float, theta_s: float, kappa: float = 0.0,
                wheelbase: float = 0.0) -> float:
        return self.k_p * e + self.k_i * integ - self.k_theta * theta_s + self.k_ff * wheelbase * kappa


@dataclass(frozen=True)
class SimSettings:
    dt: float = 1e-3
    control_dt: float = 0.01
    replan_dt: float = 0.1
    brake_tau: float = 0.05
    brake_cap: float = 8000.0  # N per wheel
    horizon: float = 60.0  # m, beyond the stopping distance from highway speed
    plan_spacing: float = 4.0  # m between planner stages
    # fraction of the tire's adhesion the planner may use; the rest absorbs
    # brake lag and replanning latency
    planner_mu_scale: float = 0.95
    v_stop: float = 0.5
    max_state: float = 1e6

    def __post_init__(self):
        if not 0 < self.dt <= 0.01:
            raise ConfigError("dt must lie in (0, 0.01]")
        for name in ("control_dt", "replan_dt"):
            ratio = getattr(self, name) / self.dt
            if ratio < 1 - 1e-9 or abs(ratio - round(ratio)) > 1e-6:
                raise ConfigError(f"{name} must be a positive multiple of dt")


@dataclass(frozen=True)
class ScenarioConfig:
    v0: float
    s_start: float = 0.0
    s_end: float | None = None
    lane_offset: float = 0.0
    mode: str = "none"
    N: int = 30  # stages for stand-alone planning
    B_profile: float | list = 0.0
    driver_delay: float | None = None  # s until the driver brakes (delayed_driver)
    driver_brake: float = 6000.0  # N total, while braking
    t_max: float = 30.0
    expect: str | None = None  # "complete" or "depart"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.v0 < 0:
            raise ConfigError("v0 must be nonnegative")
        if self.expect not in (None, "complete", "depart"):
            raise ConfigError("expect must be 'complete' or 'depart'")
        if self.mode == "delayed_driver" and self.driver_delay is None:
            raise ConfigError("delayed_driver mode needs driver_delay")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimState:
    s: float
    y: float
    theta_s: float
    v: float
    beta: float = 0.0
    omega3: float = 0.0
    delta: float = 0.0
    t: float = 0.0

    def vector(self) -> list:
        return [self.s, self.y, self.theta_s, self.v, self.beta, self.omega3]


LOG_FIELDS = ("t", "s", "y", "theta_s", "v", "beta", "omega3", "delta",
              "N_fr", "N_fl", "N_rr", "N_rl", "brake_fr", "brake_fl", "brake_rr", "brake_rl",
              "friction_util", "a1", "a2", "a3", "margin", "driver_brake",
              "liftoff", "plan_infeasible", "intervening")


@dataclass
class LogRecord:
    t: float
    s: float
    y: float
    theta_s: float
    v: float
    beta: float
    omega3: float
    delta: float
    N_fr: float  # quasi-static loads before clipping at zero
    N_fl: float
    N_rr: float
    N_rl: float
    brake_fr: float
    brake_fl: float
    brake_rr: float
    brake_rl: float
    friction_util: float  # worst wheel, |(Fx, Fy)| / (mu N)
    a1: float  # proper acceleration, body axes
    a2: float
    a3: float
    margin: float  # planned F^t_1 - B at the current position
    driver_brake: float
    liftoff: int
    plan_infeasible: int
    intervening: int

    def row(self) -> list:
        return [getattr(self, f) for f in LOG_FIELDS]


@dataclass
class RunResult:
    records: list
    outcome: str  # completed | offroad | timeout | stopped
    mode: str
    message: str = ""

    @property
    def completed(self) -> bool:
        return self.outcome == "completed"

    def summary(self) -> dict:
        r = self.records
        return {
            "mode": self.mode,
            "outcome": self.outcome,
            "completed": self.completed,
            "steps": len(r),
            "t_end": r[-1].t if r else 0.0,
            "s_end": r[-1].s if r else 0.0,
            "max_abs_y": max((abs(x.y) for x in r), default=0.0),
            "max_friction_util": max((x.friction_util for x in r), default=0.0),
            "min_wheel_load": min((min(x.N_fr, x.N_fl, x.N_rr, x.N_rl) for x in r), default=0.0),
            "min_speed": min((x.v for x in r), default=0.0),
        }


# -- geometry -----------------------------------------------------------------------


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def surface_geometry(road: RoadSurface, s: float, y: float) -> np.ndarray:
    """Flat geometry record for the vehicle kernel (layout in ``_vehicle_kernel``)."""
    jet = eval_jet(road, s, y, position=False)
    xs, xy, en = jet.x_s.tolist(), jet.x_y.tolist(), jet.e_n.tolist()
    xss, xsy, xyy = jet.x_ss.tolist(), jet.x_sy.tolist(), jet.x_yy.tolist()

    def dot(a, b):
        return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]

    I11, I12, I22 = dot(xs, xs), dot(xs, xy), dot(xy, xy)
    ns, ny = math.sqrt(I11), math.sqrt(I22)
    sp_ = -I12 / (ns * ny)  # sin(theta_p)
    cp = math.sqrt(max(0.0, 1.0 - sp_ * sp_))
    e_s = [c / ns for c in xs]
    e_perp = _cross(en, e_s)
    # heading-rate coefficients, same as kinematics.theta_s_rate_terms
    a_s = dot(_cross(xss, xs), en) / I11
    a_y = dot(_cross(xsy, xs), en) / I11
    return np.array([I11, I12, I22, dot(xss, en), dot(xsy, en), dot(xyy, en),
                     ns, -sp_ * ny, cp * ny, *e_s, *e_perp, *en, a_s, a_y])


# -- vehicle dynamics -------------------------------------------------------------------


class _Aux:
    """Per-evaluation by-products used for logging, load memory and the IMU."""

    __slots__ = ("arr",)

    def __init__(self, arr=None):
        self.arr = np.zeros(vk.N_AUX) if arr is None else arr

    s_dot = property(lambda self: float(self.arr[0]))
    y_dot = property(lambda self: float(self.arr[1]))
    w1 = property(lambda self: float(self.arr[2]))
    w2 = property(lambda self: float(self.arr[3]))
    Ft3 = property(lambda self: float(self.arr[8]))
    tire_sum = property(lambda self: tuple(self.arr[9:12].tolist()))
    loads = property(lambda self: tuple(self.arr[12:16].tolist()))
    util = property(lambda self: float(self.arr[16]))


class VehicleModel:
    """Two-track body on the surface; wheel order fr, fl, rr, rl."""

    def __init__(self, params: fm.VehicleParams, tire: TireParams = TireParams(),
                 paper_literal: bool = False):
        p = params
        self.p, self.tire, self.paper_literal = p, tire, paper_literal
        self.arr = np.array([p.m, p.I1, p.I2, p.I3, p.h, p.l_f, p.l_r, p.t_f, p.t_r, p.mu, p.g,
                             p.k_drag, p.k_lift, tire.B, tire.C, tire.E, tire.D_scale,
                             1.0 if paper_literal else 0.0])

    def derivative(self, x, geom, delta, long_cmd, memory: _Aux):
        aux = _Aux()
        dx = np.empty(6)
        vk.derivative(np.asarray(x, dtype=float), geom, self.arr, float(delta),
                      np.asarray(long_cmd, dtype=float), memory.arr, aux.arr, dx)
        return dx, aux

    def rk4(self, x, geom, delta, long_cmd, memory: _Aux, dt: float):
        xn, aux = vk.rk4_step(np.asarray(x, dtype=float), geom, self.arr, float(delta),
                              np.asarray(long_cmd, dtype=float), memory.arr, dt)
        return xn, _Aux(aux)


def proper_acceleration(aux: _Aux, params: fm.VehicleParams, v: float) -> tuple:
    """Tire plus aerodynamic force over mass in body axes; gravity excluded."""
    vsq, m = v * v, params.m
    Fx, Fy, Fz = aux.arr[9:12].tolist()
    return (Fx - params.k_drag * vsq) / m, Fy / m, (Fz - params.k_lift * vsq) / m


def synthesize_imu(aux: _Aux, w3: float, params: fm.VehicleParams, v: float) -> ebd.ImuSample:
    """Accelerometer and gyro reading for the current step."""
    return ebd.ImuSample(np.array(proper_acceleration(aux, params, v)), np.array([aux.w1, aux.w2, w3]))


# -- closed loop ------------------------------------------------------------------------


class _StageCache:
    """Planner stages on a fixed s-grid so replanning does not rebuild them."""

    def __init__(self, road, params, lane_offset, spacing, planar, paper_literal, mu):
        self.road, self.params, self.y, self.mu = road, params, lane_offset, mu
        self.planar, self.paper_literal = planar, paper_literal
        n = max(2, int(math.ceil(road.s_max / spacing)) + 1)
        self.grid = np.linspace(0.0, road.s_max, n)
        self._stages: dict[int, sp.StageParams] = {}
        self._l = np.zeros(n)
        for i in range(1, n):
            self._l[i] = self._l[i - 1] + lane_arclength(road, lane_offset, self.grid[i - 1], self.grid[i])

    def stage(self, i: int, B: float) -> sp.StageParams:
        st = self._stages.get(i)
        if st is None:
            st = sp.build_stage(self.road, self.params, i, float(self.grid[i]), self.y,
                                float(self._l[i]), 0.0, self.planar, self.paper_literal, mu=self.mu)
            self._stages[i] = st
        return _with_B(st, B)

    def horizon(self, s0: float, length: float, B: float) -> list:
        i0 = int(np.searchsorted(self.grid, s0, side="right"))
        s_end = min(self.road.s_max, s0 + length)
        i1 = int(np.searchsorted(self.grid, s_end, side="right"))
        l_next = self._l[i0] if i0 < self.grid.size else None
        if l_next is not None and self.grid[i0] - s0 < 1e-6:
            first = []
        else:
            l0 = (l_next - lane_arclength(self.road, self.y, s0, float(self.grid[i0]))
                  if l_next is not None else self._l[-1])
            first = [sp.build_stage(self.road, self.params, -1, s0, self.y, float(l0), B,
                                    self.planar, self.paper_literal, mu=self.mu)]
        return first + [self.stage(i, B) for i in range(i0, max(i1, i0 + 1)) if i < self.grid.size]


def _with_B(st: sp.StageParams, B: float) -> sp.StageParams:
    if st.B == B:
        return st
    from dataclasses import replace

    return replace(st, B=B)


class Simulator:
    def __init__(self, road: RoadSurface, params: fm.VehicleParams,
                 tire: TireParams = TireParams(), driver: DriverParams = DriverParams(),
                 settings: SimSettings = SimSettings(), paper_literal: bool = False):
        self.road, self.params, self.driver, self.cfg = road, params, driver, settings
        self.model = VehicleModel(params, tire, paper_literal)
        self.paper_literal = paper_literal
        r = road
        self._profiles = (r._psi_pp.x, r._psi_pp.c, float(r.heading0), r._bank_pp.x, r._bank_pp.c,
                          r._grade_pp.x, r._grade_pp.c)
        self._geom = np.empty(vk.N_GEOM)

    def geometry(self, s: float, y: float) -> np.ndarray:
        """Compiled equivalent of :func:`surface_geometry` (no domain check)."""
        g = np.empty(vk.N_GEOM)
        vk.geometry(*self._profiles, float(s), float(y), g)
        return g

    def step(self, state: SimState, delta: float, long_cmd, dt: float, memory: _Aux):
        """One RK4 step with the controls held; returns the new state and the last aux."""
        if not 0 < dt <= 0.01:
            raise ValueError("dt must lie in (0, 0.01]")
        x = state.vector()
        sm = min(max(x[0] + 0.5 * dt * memory.s_dot, 0.0), self.road.s_max)
        ym = max(-self.road.half_width, min(self.road.half_width, x[1] + 0.5 * dt * memory.y_dot))
        g = self.geometry(sm, ym)
        xn, aux = self.model.rk4(x, g, delta, long_cmd, memory, dt)
        xn = xn.tolist()
        if not max(abs(v) for v in xn) < self.cfg.max_state:  # also catches NaN
            raise NumericalBlowup(f"state diverged at t={state.t:.3f}")
        new = SimState(*xn, delta=delta, t=state.t + dt)
        if abs(new.y) > self.road.half_width:
            raise OffRoad(f"left the road at s={new.s:.2f} m, y={new.y:.2f} m", new.s, new.y)
        return new, aux

    def initial_memory(self, state: SimState) -> _Aux:
        """Steady guess for the load fixed point: coasting at the initial state."""
        g = surface_geometry(self.road, state.s, state.y)
        mem = _Aux()
        for _ in range(3):
            _, mem = self.model.derivative(state.vector(), g, state.delta, (0.0,) * 4, mem)
        return mem

    def run(self, scenario: ScenarioConfig) -> RunResult:
        cfg, p = self.cfg, self.params
        mode = scenario.mode
        s_end = self.road.s_max if scenario.s_end is None else min(scenario.s_end, self.road.s_max)
        state = SimState(scenario.s_start, scenario.lane_offset, 0.0, scenario.v0)
        memory = self.initial_memory(state)
        n_ctrl = int(round(cfg.control_dt / cfg.dt))
        n_plan = int(round(cfg.replan_dt / cfg.dt))
        safety = mode in ("safety_system", "safety_system_planar")
        cache = (_StageCache(self.road, p, scenario.lane_offset, cfg.plan_spacing,
                             mode == "safety_system_planar", self.paper_literal,
                             cfg.planner_mu_scale * p.mu) if safety else None)
        rate_filter = ebd.RateDifferentiator()
        brakes = [0.0] * 4
        brake_cmd = [0.0] * 4
        drive_cmd = 0.0
        integ = 0.0
        delta_cmd = 0.0
        plan = None
        plan_failed = False
        margin = 0.0
        lag = 1.0 - math.exp(-cfg.dt / cfg.brake_tau)
        records: list[LogRecord] = []
        outcome, message = "timeout", ""
        step = 0
        while True:
            driver_brake = 0.0
            if scenario.driver_delay is not None and state.t >= scenario.driver_delay:
                driver_brake = scenario.driver_brake
            if safety and step % n_plan == 0:
                new_plan, plan_failed = self._replan(cache, state, -driver_brake)
                # an infeasible replan keeps the last feasible profile, which
                # already brakes for what lies ahead
                if new_plan is not None or not plan_failed:
                    plan = new_plan
            if step % n_ctrl == 0:
                e = scenario.lane_offset - state.y
                integ = max(-self.driver.integ_clamp, min(self.driver.integ_clamp, integ + e * cfg.control_dt))
                kappa = float(self.road._angles(min(max(state.s, 0.0), self.road.s_max))[1])
                target = self.driver.command(e, integ, state.theta_s, kappa, p.l_f + p.l_r)
                target = max(-self.driver.max_angle, min(self.driver.max_angle, target))
                dmax = self.driver.max_rate * cfg.control_dt
                delta_cmd = state.delta + max(-dmax, min(dmax, target - state.delta))
                imu = synthesize_imu(memory, state.omega3, p, state.v)
                wdot = rate_filter.update(imu.omega, cfg.control_dt)
                Ft_est = ebd.estimate_tire_forces(imu, p, state.v)
                N_est = ebd.estimate_wheel_normals(Ft_est, imu.omega, wdot, p, self.paper_literal)
                B = -driver_brake  # requested F^t_1, negative when braking
                if safety and plan is not None and state.s <= plan.s[-1]:
                    F1 = plan.force_at(state.s)
                elif safety and plan_failed:
                    F1 = -2.0 * p.mu * p.m * p.g  # no usable profile: saturate
                else:
                    F1 = B
                margin = F1 - B
                total_brake = max(0.0, -F1)
                drive_cmd = max(0.0, F1)
                alloc = ebd.allocate(total_brake, N_est, p.mu, cfg.brake_cap)
                brake_cmd = alloc.forces.tolist()
            brakes = [b + lag * (c - b) for b, c in zip(brakes, brake_cmd)]
            long_cmd = (-brakes[0], -brakes[1], -brakes[2] + 0.5 * drive_cmd, -brakes[3] + 0.5 * drive_cmd)
            try:
                new, aux = self.step(state, delta_cmd, long_cmd, cfg.dt, memory)
            except OffRoad as exc:
                outcome, message = "offroad", str(exc)
                break
            state, memory = new, aux
            step += 1
            a_p = proper_acceleration(aux, p, state.v)
            N = aux.loads
            records.append(LogRecord(
                state.t, state.s, state.y, state.theta_s, state.v, state.beta, state.omega3,
                state.delta, N[0], N[1], N[2], N[3], brakes[0], brakes[1], brakes[2], brakes[3],
                aux.util, a_p[0], a_p[1], a_p[2],
                margin, driver_brake, int(min(N) < 0.0), int(plan_failed),
                int(safety and abs(margin) > sp.INTERVENTION_THRESHOLD)))
            if state.s >= s_end:
                outcome = "completed"
                break
            if state.v < cfg.v_stop:
                outcome, message = "stopped", f"came to rest at s={state.s:.2f} m"
                break
            if state.t >= scenario.t_max:
                break
        return RunResult(records, outcome, mode, message)

    def _replan(self, cache: _StageCache, state: SimState, B: float):
        stages = cache.horizon(max(0.0, state.s), self.cfg.horizon, B)
        if len(stages) < 2:
            return None, False
        try:
            return sp.solve_profile(stages, state.v, self.paper_literal), False
        except Infeasible:
            return None, True
        except SolverFailure as exc:
            log.warning("planner failed at s=%.2f: %s", state.s, exc)
            return None, True


def warm_up() -> None:
    """Compile (or load from the numba cache) the vehicle kernels.

    The first call can take several seconds; doing it up front keeps that
    one-off cost out of timed runs.
    """
    road = RoadSurface.plane(20.0, 4.0)
    sim = Simulator(road, fm.VehicleParams())
    state = SimState(1.0, 0.0, 0.0, 5.0)
    sim.step(state, 0.0, (0.0,) * 4, 0.005, sim.initial_memory(state))


def run_scenario(road: RoadSurface, params: fm.VehicleParams, scenario: ScenarioConfig,
                 mode: str | None = None, **kwargs) -> RunResult:
    if mode is not None and mode != scenario.mode:
        from dataclasses import replace

        scenario = replace(scenario, mode=mode)
    return Simulator(road, params, **kwargs).run(scenario)


def write_log_csv(records, path, comment: str | None = None) -> None:
    """One row per log record; ``comment`` becomes a leading ``#`` line."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in records:
            w.writerow([sp.fmt(v) for v in r.row()])


def read_log_csv(path) -> list[LogRecord]:
    ints = {"liftoff", "plan_infeasible", "intervening"}
    out = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
        for row in csv.DictReader(lines):
            out.append(LogRecord(**{k: (int(v) if k in ints else float(v)) for k, v in row.items()}))
    return out

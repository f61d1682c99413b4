"""Multi-stage safety program: the least brake/drive intervention that keeps
every stage inside its friction cone and every wheel on the road.

Decision variables per stage ``k`` are ``(v2_k, vd_k, t_k)``: squared speed,
longitudinal acceleration and the epigraph variable of ``|F^t_1 - B|``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import conic_solver as cs
from . import force_model as fm
from .affine import AffineScalar
from .errors import EmptyStages, Infeasible, OutOfDomain, SolverFailure
from .kinematics import VelocityParam
from .road_surface import (FundamentalForms, RoadSurface, SurfaceFrame, SurfaceJet, eval_jet,
                           fundamental_forms, lane_arclength, surface_frame)

NVAR = 3  # variables per stage
INTERVENTION_THRESHOLD = 1.0  # N
CSV_COLUMNS = ("k", "s", "l", "v2", "vdot", "Ft1", "Ft2", "Ft3", "margin", "friction_util",
               "Nfr", "Nfl", "Nrr", "Nrl", "flag")


@dataclass(frozen=True)
class StageParams:
    k: int
    s: float
    y: float
    n: float
    theta_s: float
    beta: float
    kappa_s: float
    kappa_beta: float
    l: float
    mu: float
    B: float
    jet: SurfaceJet = field(repr=False)
    forms: FundamentalForms = field(repr=False)
    frame: SurfaceFrame = field(repr=False)
    forces: fm.ForceSet = field(repr=False)
    normals: fm.WheelNormals = field(repr=False)

    def constraint_exprs(self) -> list[AffineScalar]:
        """The four wheel loads and the three friction-cone entries."""
        Ft = self.forces.Ft
        return [*self.normals.as_tuple(), self.mu * Ft[2], Ft[0], Ft[1]]


def _b_values(B_profile, s: np.ndarray) -> np.ndarray:
    if callable(B_profile):
        return np.array([float(B_profile(si)) for si in s])
    arr = np.broadcast_to(np.asarray(B_profile, dtype=float), s.shape)
    return np.array(arr, dtype=float)


def build_stage(road: RoadSurface, params: fm.VehicleParams, k: int, s: float, y: float, l: float,
                B: float, planar: bool = False, paper_literal: bool = False,
                theta_rate_x_yy: bool = False, mu: float | None = None) -> StageParams:
    """One lane-following stage: heading along the lane, no sideslip, CoM at height h."""
    jet = eval_jet(road, s, y, position=False)
    forms = fundamental_forms(jet)
    if planar:
        forms = FundamentalForms(I=forms.I, II=np.zeros((2, 2)))
    frame = surface_frame(jet, 0.0)
    vel = VelocityParam(1.0, 0.0, 0.0, 0.0)
    forces, _ = fm.force_set(jet, forms, frame, params.h, vel, params, theta_rate_x_yy)
    normals = fm.wheel_normals(forces.KN, forces.Ft[2], params, paper_literal)
    return StageParams(k=k, s=s, y=y, n=params.h, theta_s=0.0, beta=0.0, kappa_s=0.0,
                       kappa_beta=0.0, l=l, mu=params.mu if mu is None else mu, B=B, jet=jet,
                       forms=forms, frame=frame, forces=forces, normals=normals)


def build_stages(road: RoadSurface, params: fm.VehicleParams, lane_offset: float, s_start: float,
                 s_end: float, N: int, B_profile: float | Sequence[float] | Callable = 0.0,
                 planar: bool = False, paper_literal: bool = False,
                 theta_rate_x_yy: bool = False) -> list[StageParams]:
    """Uniformly spaced lane-following stages on ``[s_start, s_end]``.

    ``planar=True`` zeroes the second fundamental form, i.e. plans as if the
    road were its local tangent plane.
    """
    if N < 2:
        raise EmptyStages("at least two stages are required")
    if not s_end > s_start:
        raise OutOfDomain("s_end must exceed s_start")
    road.check_domain(s_start, lane_offset)
    road.check_domain(s_end, lane_offset)
    s = np.linspace(s_start, s_end, N)
    B = _b_values(B_profile, s)
    stages = []
    l = 0.0
    for k in range(N):
        if k:
            l += lane_arclength(road, lane_offset, s[k - 1], s[k])
        stages.append(build_stage(road, params, k, float(s[k]), lane_offset, l, float(B[k]),
                                  planar, paper_literal, theta_rate_x_yy))
    return stages


@dataclass(frozen=True)
class ProgramLayout:
    N: int
    v0: float
    continuity_factor: float

    def v2(self, k):
        return NVAR * k

    def vd(self, k):
        return NVAR * k + 1

    def t(self, k):
        return NVAR * k + 2


def continuity_factor(paper_literal: bool) -> float:
    """Weight of ``(vd_k + vd_{k+1}) dl`` in the squared-speed update.

    ``d(v^2)/dl = 2 vd``, so the trapezoid rule gives weight 1.
    ``paper_literal=True`` selects the half-weight variant for comparison.
    """
    return 0.5 if paper_literal else 1.0


def _row(expr: AffineScalar, k: int, n: int, t_coef: float = 0.0):
    """G row and h entry for the cone slack ``expr(x) + t_coef*t_k``."""
    g = np.zeros(n)
    g[NVAR * k] = -expr.c_v2
    g[NVAR * k + 1] = -expr.c_vd
    g[NVAR * k + 2] = -t_coef
    return g, expr.c0


def assemble_program(stages: Sequence[StageParams], v0: float, paper_literal: bool = False,
                     slack_scale: float | None = None) -> tuple[cs.ConicProgram, ProgramLayout]:
    """Cone program for the stages.

    With ``slack_scale`` set, the program becomes the phase-1 relaxation:
    each stage gets a nonnegative slack, in units of ``slack_scale`` newtons,
    that loosens its load and friction constraints, and the objective is the
    total slack.
    """
    if not stages:
        raise EmptyStages("no stages")
    if v0 < 0:
        raise ValueError("initial speed must be nonnegative")
    N = len(stages)
    phase1 = slack_scale is not None
    n = NVAR * N + (N if phase1 else 0)
    lay = ProgramLayout(N, v0, continuity_factor(paper_literal))

    orth_G, orth_h, soc_G, soc_h = [], [], [], []

    def add(rows_G, rows_h, expr, k, t_coef=0.0, slack=0.0):
        g, h = _row(expr, k, n, t_coef)
        if slack:
            g[NVAR * N + k] = -slack
        rows_G.append(g)
        rows_h.append(h)

    for k, st in enumerate(stages):
        F1 = st.forces.Ft[0]
        margin = F1 - st.B
        add(orth_G, orth_h, -margin, k, t_coef=1.0)
        add(orth_G, orth_h, margin, k, t_coef=1.0)
        for Ni in st.normals.as_tuple():
            add(orth_G, orth_h, Ni, k, slack=slack_scale or 0.0)
        add(orth_G, orth_h, AffineScalar(0.0, 1.0, 0.0), k)
        head, *tail = (st.mu * st.forces.Ft[2], F1, st.forces.Ft[1])
        add(soc_G, soc_h, head, k, slack=slack_scale or 0.0)
        for e in tail:
            add(soc_G, soc_h, e, k)
    if phase1:
        for k in range(N):
            g = np.zeros(n)
            g[NVAR * N + k] = -1.0
            orth_G.append(g)
            orth_h.append(0.0)

    A = np.zeros((N, n))
    b = np.zeros(N)
    A[0, lay.v2(0)] = 1.0
    b[0] = v0 * v0
    cf = lay.continuity_factor
    for k in range(N - 1):
        dl = stages[k + 1].l - stages[k].l
        r = k + 1
        A[r, lay.v2(k + 1)] = 1.0
        A[r, lay.v2(k)] = -1.0
        A[r, lay.vd(k)] = -cf * dl
        A[r, lay.vd(k + 1)] = -cf * dl

    c = np.zeros(n)
    if phase1:
        c[NVAR * N:] = 1.0
    else:
        c[2:NVAR * N:NVAR] = 1.0
    G = np.vstack(orth_G + soc_G)
    h = np.array(orth_h + soc_h)
    names = tuple(f"{nm}[{k}]" for k in range(N) for nm in ("v2", "vdot", "t"))
    if phase1:
        names += tuple(f"slack[{k}]" for k in range(N))
    prog = cs.ConicProgram(c=c, A=A, b=b, G=G, h=h, l=len(orth_h), q=(3,) * N, names=names)
    return prog, lay


@dataclass
class SpeedProfile:
    s: np.ndarray
    l: np.ndarray
    v2: np.ndarray
    vdot: np.ndarray
    Ft: np.ndarray  # (N, 3)
    margin: np.ndarray
    friction_util: np.ndarray
    normals: np.ndarray  # (N, 4) in order fr, fl, rr, rl
    status: str
    objective: float
    residuals: cs.ResidualReport | None = None
    continuity_residual: float = float("nan")
    initial_residual: float = float("nan")
    iterations: int = 0

    @property
    def min_normal(self) -> np.ndarray:
        return self.normals.min(axis=1)

    @property
    def N(self) -> int:
        return self.s.size

    def speed_at(self, s: float) -> float:
        return float(math.sqrt(max(np.interp(s, self.s, self.v2), 0.0)))

    def force_at(self, s: float) -> float:
        return float(np.interp(s, self.s, self.Ft[:, 0]))


def evaluate_profile(stages: Sequence[StageParams], v2, vdot, paper_literal: bool = False,
                     v0: float | None = None) -> SpeedProfile:
    """Physical quantities of a candidate ``(v2, vdot)`` sequence, by direct substitution."""
    v2 = np.asarray(v2, dtype=float)
    vdot = np.asarray(vdot, dtype=float)
    N = len(stages)
    Ft = np.array([[F(v2[k], vdot[k]) for F in st.forces.Ft] for k, st in enumerate(stages)])
    normals = np.array([[Ni(v2[k], vdot[k]) for Ni in st.normals.as_tuple()]
                        for k, st in enumerate(stages)])
    B = np.array([st.B for st in stages])
    mu = np.array([st.mu for st in stages])
    with np.errstate(divide="ignore", invalid="ignore"):
        util = np.hypot(Ft[:, 0], Ft[:, 1]) / (mu * Ft[:, 2])
    util = np.where(Ft[:, 2] > 0, util, np.inf)
    l = np.array([st.l for st in stages])
    cf = continuity_factor(paper_literal)
    cont = v2[1:] - v2[:-1] - cf * (vdot[:-1] + vdot[1:]) * np.diff(l)
    margin = Ft[:, 0] - B
    return SpeedProfile(
        s=np.array([st.s for st in stages]), l=l, v2=v2, vdot=vdot, Ft=Ft, margin=margin,
        friction_util=util, normals=normals, status=cs.OPTIMAL, objective=float(np.abs(margin).sum()),
        continuity_residual=float(np.abs(cont).max(initial=0.0)) if N > 1 else 0.0,
        initial_residual=abs(v2[0] - v0 * v0) if v0 is not None else float("nan"),
    )


def first_violated_stage(stages, v0: float, paper_literal: bool = False,
                         tol: float = 1e-6) -> int | None:
    """Phase-1 relaxation: index of the first stage that cannot be satisfied."""
    scale = max(1.0, max(abs(st.forces.Fg).max() for st in stages))
    prog, lay = assemble_program(stages, v0, paper_literal, slack_scale=scale)
    sol = cs.solve(prog)
    if sol.status != cs.OPTIMAL:
        return None
    slack = sol.x[NVAR * lay.N:]
    bad = np.flatnonzero(slack > tol)
    return int(bad[0]) if bad.size else None


def solve_profile(stages: Sequence[StageParams], v0: float, paper_literal: bool = False,
                  max_iter: int = 100, tol: float = 1e-8) -> SpeedProfile:
    """Solve the safety program and map the result back to per-stage physics.

    Raises :class:`Infeasible` naming the first stage the phase-1 program had
    to relax, or :class:`SolverFailure` for anything else that is not optimal.
    """
    prog, lay = assemble_program(stages, v0, paper_literal)
    sol = cs.solve(prog, max_iter=max_iter, tol=tol)
    if sol.status == cs.INFEASIBLE:
        k = first_violated_stage(stages, v0, paper_literal)
        where = f"stage {k}" if k is not None else "an undetermined stage"
        raise Infeasible(f"no safe speed profile from v0={v0:g} m/s; first violation at {where}", k)
    if sol.status != cs.OPTIMAL:
        raise SolverFailure(f"conic solver returned {sol.status}: {sol.info.get('reason', '')}",
                            sol.status)
    x = sol.x
    prof = evaluate_profile(stages, x[0::NVAR][: lay.N], x[1::NVAR][: lay.N], paper_literal, v0)
    prof.status = sol.status
    prof.objective = float(sol.primal_objective)
    prof.residuals = sol.residuals
    prof.iterations = sol.iterations
    return prof


def intervention_report(profile: SpeedProfile, threshold: float = INTERVENTION_THRESHOLD):
    """Per-stage ``(F^t_1 - B, flag)``; a flag marks a needed brake or drive correction."""
    return [(float(m), bool(abs(m) > threshold)) for m in profile.margin]


def profile_rows(profile: SpeedProfile, threshold: float = INTERVENTION_THRESHOLD) -> list[dict]:
    rows = []
    flags = intervention_report(profile, threshold)
    for k in range(profile.N):
        rows.append({
            "k": k, "s": profile.s[k], "l": profile.l[k], "v2": profile.v2[k],
            "vdot": profile.vdot[k], "Ft1": profile.Ft[k, 0], "Ft2": profile.Ft[k, 1],
            "Ft3": profile.Ft[k, 2], "margin": profile.margin[k],
            "friction_util": profile.friction_util[k],
            "Nfr": profile.normals[k, 0], "Nfl": profile.normals[k, 1],
            "Nrr": profile.normals[k, 2], "Nrl": profile.normals[k, 3],
            "flag": int(flags[k][1]),
        })
    return rows


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_profile_csv(profile: SpeedProfile, path, threshold: float = INTERVENTION_THRESHOLD,
                      comment: str | None = None) -> None:
    """Write the per-stage table; ``comment`` becomes a leading ``#`` line."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in profile_rows(profile, threshold):
            w.writerow([fmt(row[c]) for c in CSV_COLUMNS])


def read_profile_csv(path) -> list[dict]:
    """Rows of a profile CSV as dicts; ``k`` and ``flag`` are ints, the rest floats."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [{k: (int(v) if k in ("k", "flag") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(lines)]

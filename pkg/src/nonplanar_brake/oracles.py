"""Independent reference solutions for the safety program.

Neither route touches the assembled cone program: both read the stages'
affine force and load expressions directly.

* :func:`dp_oracle` is a dynamic program over a grid. The squared-speed
  update couples neighbouring stages only through the edge quantity
  ``z_k = v2_k + c dl_k vd_k = v2_{k+1} - c dl_k vd_{k+1}``, so a chain over
  ``z`` with one gridded scalar per edge covers every ``(v2, vd)`` sequence
  that satisfies the update exactly. Grid cells are checked for feasibility
  one by one; the problem is convex, so the grid is refined around the
  near-optimal band. The final stage is solved exactly for each incoming
  edge value rather than gridded.
* :func:`reference_solve` eliminates ``v2`` and runs Shor's ellipsoid method
  (subgradient steps with space dilation) on the remaining accelerations.
  It needs only function values and subgradients and converges linearly in
  the handful of dimensions the tests use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .speed_planner import StageParams, continuity_factor

FEAS_TOL = 1e-9


def _coef(stages: Sequence[StageParams]) -> np.ndarray:
    """(N, 7, 3) array of (c0, c_v2, c_vd) for N_fr, N_fl, N_rr, N_rl, mu F3, F1, F2."""
    return np.array([[[e.c0, e.c_v2, e.c_vd] for e in st.constraint_exprs()] for st in stages])


def _stage_cost(coef, B, v2, vd):
    """``|F1 - B|`` where the stage is feasible, ``inf`` elsewhere (broadcasts)."""
    vals = [c[0] + c[1] * v2 + c[2] * vd for c in coef]
    N4, head, F1, F2 = vals[:4], vals[4], vals[5], vals[6]
    scale = max(1.0, float(np.abs(coef[:, 0]).max()))
    tol = FEAS_TOL * scale
    ok = v2 >= -FEAS_TOL
    for Ni in N4:
        ok &= Ni >= -tol
    ok &= np.hypot(F1, F2) <= head + tol
    return np.where(ok, np.abs(F1 - B), np.inf)


@dataclass
class DPResult:
    objective: float
    v2: np.ndarray  # one optimal path
    vdot: np.ndarray
    v2_lo: np.ndarray  # range of v2 over near-optimal paths
    v2_hi: np.ndarray
    feasible: bool
    grid_step: np.ndarray  # final z spacing per edge


class _Chain:
    """Stage geometry of the z-chain: edge k sits between stages k and k + 1."""

    def __init__(self, stages, v0, paper_literal):
        self.N = len(stages)
        self.coef = _coef(stages)
        self.B = np.array([st.B for st in stages])
        self.dl = np.diff([st.l for st in stages])
        self.cf = continuity_factor(paper_literal)
        self.v0sq = v0 * v0
        self.scale = max(1.0, float(np.abs(self.coef[:, :, 0]).max()))

    def pair(self, k, zp, zn):
        """(v2_k, vd_k) from the edge values on either side of an inner stage."""
        cf, a, b = self.cf, self.dl[k - 1], self.dl[k]
        vd = (zn - zp) / (cf * (a + b))
        return zp + cf * a * vd, vd

    def first(self, z0):
        return np.full_like(z0, self.v0sq), (z0 - self.v0sq) / (self.cf * self.dl[0])

    def cost(self, k, zp, zn):
        if k == 0:
            v2, vd = self.first(zn)
        else:
            v2, vd = self.pair(k, zp[:, None], zn[None, :])
        return _stage_cost(self.coef[k], self.B[k], v2, vd), v2, vd

    def last(self, zp):
        """Exact best cost, v2 and vd of the final stage for each incoming edge value.

        The final stage's acceleration is not tied to a later edge, so for a
        fixed incoming edge it is a one-dimensional problem: an interval from
        the linear constraints, cut by the quadratic friction constraint, and
        ``|F1 - B|`` minimised over what is left.
        """
        k = self.N - 1
        slope = self.cf * self.dl[-1]
        out = np.full((3, zp.size), np.nan)
        out[0] = np.inf
        for i, z in enumerate(zp):
            res = _last_stage(self.coef[k], self.B[k], float(z), slope, FEAS_TOL * self.scale)
            if res is not None:
                out[:, i] = res
        return out


def _last_stage(coef, B, zp, slope, tol):
    # every expression is alpha + beta vd once v2 = zp + slope vd
    alpha = coef[:, 0] + coef[:, 1] * zp
    beta = coef[:, 1] * slope + coef[:, 2]
    lo, hi = -math.inf, math.inf
    lin = [(zp, slope, -FEAS_TOL)] + [(alpha[i], beta[i], -tol) for i in range(4)]
    lin.append((alpha[4] + tol, beta[4], 0.0))
    for a, b, floor in lin:
        if b > 0:
            lo = max(lo, (floor - a) / b)
        elif b < 0:
            hi = min(hi, (floor - a) / b)
        elif a < floor:
            return None
    # F1^2 + F2^2 - (head + tol)^2 <= 0 as qa vd^2 + 2 qb vd + qc <= 0
    a4 = alpha[4] + tol
    qa = beta[5] ** 2 + beta[6] ** 2 - beta[4] ** 2
    qb = alpha[5] * beta[5] + alpha[6] * beta[6] - a4 * beta[4]
    qc = alpha[5] ** 2 + alpha[6] ** 2 - a4 ** 2
    disc = qb * qb - qa * qc
    if qa == 0.0:
        if qb > 0:
            hi = min(hi, -qc / (2 * qb))
        elif qb < 0:
            lo = max(lo, -qc / (2 * qb))
        elif qc > 0:
            return None
    elif disc < 0:
        if qa > 0:
            return None
    else:
        # numerically stable roots
        q = -(qb + math.copysign(math.sqrt(disc), qb))
        r = sorted((q / qa, qc / q) if q != 0.0 else (0.0, 0.0))
        if qa > 0:
            lo, hi = max(lo, r[0]), min(hi, r[1])
        else:
            # outside the roots; on the half-line head >= 0 only one side survives
            left = (lo, min(hi, r[0]))
            right = (max(lo, r[1]), hi)
            lo, hi = max((left, right), key=lambda p: p[1] - p[0])
    if lo > hi:
        return None
    if beta[5] != 0.0:
        vd = min(max((B - alpha[5]) / beta[5], lo), hi)
    else:
        vd = lo if math.isfinite(lo) else hi
    if not math.isfinite(vd):
        vd = 0.0
    return abs(alpha[5] + beta[5] * vd - B), zp + slope * vd, vd


def _dp_pass(ch: _Chain, grids, tol_rel):
    N = ch.N
    E = N - 1  # gridded edges
    fwd = [None] * E
    arg = [None] * E
    fwd[0] = ch.cost(0, None, grids[0])[0]
    for k in range(1, E):
        C = ch.cost(k, grids[k - 1], grids[k])[0]
        tot = fwd[k - 1][:, None] + C
        arg[k] = np.argmin(tot, axis=0)
        fwd[k] = tot[arg[k], np.arange(grids[k].size)]
    last_c, last_v2, last_vd = ch.last(grids[E - 1])
    total = fwd[E - 1] + last_c
    opt = float(total.min())
    if not math.isfinite(opt):
        return None
    tol = tol_rel * max(opt, 1.0)
    # backward values for the near-optimal band
    bwd = [None] * E
    bwd[E - 1] = last_c
    lo = np.empty(N)
    hi = np.empty(N)
    lo[0] = hi[0] = ch.v0sq
    near = total <= opt + tol
    lo[N - 1], hi[N - 1] = last_v2[near].min(), last_v2[near].max()
    for k in range(E - 1, 0, -1):
        C, v2, _ = ch.cost(k, grids[k - 1], grids[k])
        tot = C + bwd[k][None, :]
        bwd[k - 1] = tot.min(axis=1)
        near = fwd[k - 1][:, None] + tot <= opt + tol
        v2n = np.broadcast_to(v2, near.shape)[near]
        lo[k], hi[k] = v2n.min(), v2n.max()
    band = []
    for k in range(E):
        nodes = np.flatnonzero(fwd[k] + bwd[k] <= opt + tol)
        band.append((grids[k][nodes.min()], grids[k][nodes.max()]))
    # one optimal path
    idx = [0] * E
    idx[-1] = int(np.argmin(total))
    for k in range(E - 1, 0, -1):
        idx[k - 1] = int(arg[k][idx[k]])
    z = np.array([grids[k][idx[k]] for k in range(E)])
    v2p = np.empty(N)
    vdp = np.empty(N)
    v2p[0], vdp[0] = ch.v0sq, (z[0] - ch.v0sq) / (ch.cf * ch.dl[0])
    for k in range(1, E):
        v2p[k], vdp[k] = ch.pair(k, z[k - 1], z[k])
    v2p[-1], vdp[-1] = last_v2[idx[-1]], last_vd[idx[-1]]
    return opt, v2p, vdp, lo, hi, band


def dp_oracle(stages: Sequence[StageParams], v0: float, paper_literal: bool = False,
              points: int = 400, rounds: int = 6, margin: int = 16, a_max: float | None = None,
              tol_rel: float = 1e-4) -> DPResult:
    """Grid dynamic program for the least total ``|F1 - B|``.

    The first grid spans every edge value reachable with ``|vd| <= a_max``;
    each later round re-grids every edge over the previous near-optimal band
    (cost within ``tol_rel`` of the optimum) plus ``margin`` cells either
    side. The margin matters where the optimum sits in a thin corner of the
    feasible set: there the best coarse cell can lie several cells away.
    """
    if len(stages) < 2:
        raise ValueError("the grid oracle needs at least two stages")
    ch = _Chain(stages, v0, paper_literal)
    if a_max is None:
        a_max = 2.0 * max(st.mu for st in stages) * 9.81 + 5.0
    span = ch.cf * ch.dl.max() * a_max
    top = ch.v0sq + 2.0 * a_max * float(ch.dl.sum()) if np.any(ch.B > 0) else ch.v0sq
    grids = [np.linspace(-span, top + span, points) for _ in range(ch.N - 1)]
    # the first edge depends on vd_0 alone; its feasible interval can be far
    # narrower than the coarse spacing, so grid it from a dense 1-D scan
    vd = np.linspace(-a_max, a_max, 100 * points + 1)
    ok = np.isfinite(_stage_cost(ch.coef[0], ch.B[0], ch.v0sq, vd))
    if ok.any():
        h = vd[1] - vd[0]
        a, b = vd[ok].min() - h, vd[ok].max() + h
        grids[0] = ch.v0sq + ch.cf * ch.dl[0] * np.linspace(a, b, points)
    res = None
    for _ in range(rounds):
        out = _dp_pass(ch, grids, tol_rel)
        if out is None:
            break
        res = out
        band = out[5]
        new = []
        for g, (a, b) in zip(grids, band):
            h = g[1] - g[0]
            new.append(np.linspace(a - margin * h, b + margin * h, points))
        grids = new
    N = ch.N
    if res is None:
        nan = np.full(N, np.nan)
        return DPResult(math.inf, nan, nan, nan, nan, False, np.full(N - 1, np.nan))
    opt, v2p, vdp, lo, hi, _ = res
    step = np.array([g[1] - g[0] for g in grids])
    return DPResult(opt, v2p, vdp, lo, hi, True, step)


# -- ellipsoid reference ------------------------------------------------------------------


@dataclass
class ReferenceResult:
    objective: float
    vdot: np.ndarray
    v2: np.ndarray
    iterations: int
    width: float  # bound on objective - optimum at exit
    feasible: bool


class _Reduced:
    """The program in the accelerations alone, with ``v2 = v0^2 + L vd``."""

    def __init__(self, stages, v0, paper_literal):
        self.N = N = len(stages)
        self.coef = _coef(stages)
        self.B = np.array([st.B for st in stages])
        l = np.array([st.l for st in stages])
        dl = np.diff(l)
        cf = continuity_factor(paper_literal)
        L = np.zeros((N, N))
        for k in range(N - 1):
            L[k + 1] = L[k]
            L[k + 1, k] += cf * dl[k]
            L[k + 1, k + 1] += cf * dl[k]
        self.L = L
        self.v0sq = v0 * v0

    def v2(self, vd):
        return self.v0sq + self.L @ vd

    def exprs(self, vd):
        """Values (N, 7) and gradients (N, 7, N) of every stage expression."""
        v2 = self.v2(vd)
        c = self.coef
        vals = c[:, :, 0] + c[:, :, 1] * v2[:, None] + c[:, :, 2] * vd[:, None]
        grads = c[:, :, 1][:, :, None] * self.L[:, None, :]
        eye = np.eye(self.N)
        grads = grads + c[:, :, 2][:, :, None] * eye[:, None, :]
        return v2, vals, grads

    def worst_violation(self, vd):
        """Largest constraint value (positive means infeasible) and its subgradient."""
        v2, vals, grads = self.exprs(vd)
        scale = max(1.0, float(np.abs(self.coef[:, :, 0]).max()))
        worst, g = -np.inf, None
        for k in range(self.N):
            cand = [(-v2[k] * scale, -self.L[k] * scale)]
            for i in range(4):
                cand.append((-vals[k, i], -grads[k, i]))
            F1, F2, head = vals[k, 5], vals[k, 6], vals[k, 4]
            r = math.hypot(F1, F2)
            if r > 0:
                dr = (F1 * grads[k, 5] + F2 * grads[k, 6]) / r
            else:
                dr = np.zeros(self.N)
            cand.append((r - head, dr - grads[k, 4]))
            for val, grad in cand:
                if val > worst:
                    worst, g = val, grad
        return worst / scale, g

    def objective(self, vd):
        _, vals, grads = self.exprs(vd)
        r = vals[:, 5] - self.B
        f = float(np.abs(r).sum())
        g = (np.sign(r)[:, None] * grads[:, 5]).sum(axis=0)
        return f, g


def reference_solve(stages: Sequence[StageParams], v0: float, paper_literal: bool = False,
                    radius: float = 100.0, rel_tol: float = 1e-10,
                    max_iter: int = 200000) -> ReferenceResult:
    """Minimise total ``|F1 - B|`` with the central-cut ellipsoid method.

    Starts from the ball of ``radius`` (m/s^2 per stage) around zero
    acceleration. Infeasible centres are cut with the most violated
    constraint, feasible ones with the objective subgradient. Stops when
    the ellipsoid's objective width falls below ``rel_tol`` of the best value.
    """
    red = _Reduced(stages, v0, paper_literal)
    n = red.N
    if n < 2:
        raise ValueError("the ellipsoid reference needs at least two stages")
    x = np.zeros(n)
    P = np.eye(n) * (radius * radius * n)
    best_f, best_x, width = math.inf, None, math.inf
    it = 0
    grow = n * n / (n * n - 1.0)
    for it in range(1, max_iter + 1):
        viol, g = red.worst_violation(x)
        feasible = viol <= 0
        if feasible:
            f, g = red.objective(x)
            if f < best_f:
                best_f, best_x = f, x.copy()
        Pg = P @ g
        gPg = float(g @ Pg)
        if gPg <= 0:
            width = 0.0
            break
        root = math.sqrt(gPg)
        if feasible:
            width = root
            if width <= rel_tol * max(1.0, best_f):
                break
        Pg_n = Pg / root
        x = x - Pg_n / (n + 1)
        P = grow * (P - (2.0 / (n + 1)) * np.outer(Pg_n, Pg_n))
        P = 0.5 * (P + P.T)
    if best_x is None:
        nan = np.full(n, np.nan)
        return ReferenceResult(math.inf, nan, nan, it, math.inf, False)
    return ReferenceResult(best_f, best_x, red.v2(best_x), it, width, True)


# -- closed forms ---------------------------------------------------------------------------


def flat_circle_limit(mu: float, radius: float, g: float = 9.81) -> float:
    """Highest steady v^2 on a level circle."""
    return mu * g * radius


def banked_turn_limit(mu: float, radius: float, bank: float, g: float = 9.81) -> float:
    """Highest steady v^2 on a banked circle; ``bank < 0`` is off-camber (radians)."""
    t = math.tan(bank)
    return g * radius * (mu + t) / (1.0 - mu * t)


def crest_contact_limit(vertical_radius: float, g: float = 9.81) -> float:
    """v^2 at which the normal force over a crest vanishes."""
    return g * vertical_radius

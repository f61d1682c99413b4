"""Primal-dual interior-point solver for small second-order cone programs.

Problem form::

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K = R^l_+ x Q^{q_1} x ... x Q^{q_k}

with dual ``maximize -b'y - h'z  s.t.  A'y + G'z + c = 0, z in K``. Second-order
cone blocks are ordered ``(radius, x_1, ..., x_{q-1})``.

The method runs on the homogeneous self-dual embedding, so a single loop
either converges to an optimal pair or produces a certificate of primal or
dual infeasibility. Cone blocks use Nesterov-Todd scaling and steps use
Mehrotra's predictor-corrector. The scaled KKT system keeps a fixed sparsity
pattern across iterations and is factorised with a sparse LU.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
MAX_ITER = "MaxIter"
NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True, eq=False)
class ConicProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    l: int
    q: tuple = ()
    names: tuple | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        G = np.asarray(self.G, dtype=float).reshape(-1, n)
        b = np.asarray(self.b, dtype=float).ravel()
        h = np.asarray(self.h, dtype=float).ravel()
        q = tuple(int(k) for k in self.q)
        if A.shape[0] != b.size or G.shape[0] != h.size:
            raise ValueError("row counts of A/b or G/h disagree")
        if self.l < 0 or any(k < 1 for k in q) or self.l + sum(q) != h.size:
            raise ValueError("cone dimensions do not partition the inequality rows")
        for name, arr in (("c", c), ("A", A), ("b", b), ("G", G), ("h", h)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"program data {name} is not finite")
        for k, v in (("c", c), ("A", A), ("b", b), ("G", G), ("h", h), ("q", q)):
            set_(self, k, v)
        set_(self, "l", int(self.l))

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.h.size

    def to_dict(self) -> dict:
        return {
            "c": self.c.tolist(), "A": self.A.tolist(), "b": self.b.tolist(),
            "G": self.G.tolist(), "h": self.h.tolist(),
            "cones": {"l": self.l, "q": list(self.q)},
            **({"names": list(self.names)} if self.names else {}),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConicProgram":
        n = len(d["c"])
        cones = d.get("cones", {})
        A = d.get("A") or np.zeros((0, n))
        return cls(c=d["c"], A=A, b=d.get("b", []), G=d["G"], h=d["h"],
                   l=cones.get("l", 0), q=tuple(cones.get("q", ())),
                   names=tuple(d["names"]) if d.get("names") else None)


@dataclass(frozen=True)
class ResidualReport:
    eq: float  # max |Ax - b|
    orthant: float  # max violation of s >= 0 on orthant rows
    soc: float  # max of ||s_1|| - s_0 over cone blocks (0 if inside)
    objective: float
    eq_scaled: float
    cone_scaled: float
    dual: float = float("nan")  # max |A'y + G'z + c|, scaled
    dual_cone: float = float("nan")
    gap: float = float("nan")  # c'x + b'y + h'z
    gap_scaled: float = float("nan")

    def certified(self, tol: float = 1e-7) -> bool:
        vals = [self.eq_scaled, self.cone_scaled]
        if not np.isnan(self.dual):
            vals += [self.dual, self.dual_cone, self.gap_scaled]
        return bool(max(vals) < tol)


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    iterations: int
    primal_objective: float = float("nan")
    dual_objective: float = float("nan")
    residuals: ResidualReport | None = None
    info: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.primal_objective - self.dual_objective

    def to_dict(self) -> dict:
        out = {
            "status": self.status,
            "iterations": self.iterations,
            "x": self.x.tolist(), "y": self.y.tolist(), "z": self.z.tolist(), "s": self.s.tolist(),
            "primal_objective": self.primal_objective,
            "dual_objective": self.dual_objective,
        }
        if self.residuals is not None:
            out["residuals"] = {k: getattr(self.residuals, k) for k in self.residuals.__dataclass_fields__}
        return out


# -- cone bookkeeping ------------------------------------------------------------


class _Cones:
    def __init__(self, l: int, q: tuple):
        self.l = l
        self.degree = l + len(q)
        self.groups = []  # (dim, index array of shape (k, dim))
        offsets = l + np.concatenate([[0], np.cumsum(q)[:-1]]).astype(int) if q else []
        by_dim: dict[int, list] = {}
        for off, d in zip(offsets, q):
            by_dim.setdefault(d, []).append(np.arange(off, off + d))
        for d in sorted(by_dim):
            self.groups.append((d, np.array(by_dim[d])))
        self.m = l + sum(q)

    def e(self) -> np.ndarray:
        out = np.zeros(self.m)
        out[: self.l] = 1.0
        for _, idx in self.groups:
            out[idx[:, 0]] = 1.0
        return out

    def min_eig(self, u: np.ndarray) -> float:
        """Smallest 'eigenvalue' of u; positive iff u is interior."""
        vals = [np.inf]
        if self.l:
            vals.append(u[: self.l].min())
        for _, idx in self.groups:
            blk = u[idx]
            vals.append((blk[:, 0] - np.linalg.norm(blk[:, 1:], axis=1)).min())
        return float(min(vals))

    def dot(self, u, v):
        return float(u @ v)

    def jordan(self, u, v):
        out = np.empty(self.m)
        out[: self.l] = u[: self.l] * v[: self.l]
        for _, idx in self.groups:
            U, V = u[idx], v[idx]
            out[idx[:, 0]] = np.einsum("ij,ij->i", U, V)
            out[idx[:, 1:]] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        return out

    def jordan_solve(self, lam, d):
        """x with lam o x = d."""
        out = np.empty(self.m)
        out[: self.l] = d[: self.l] / lam[: self.l]
        for _, idx in self.groups:
            L, D = lam[idx], d[idx]
            l0, l1 = L[:, 0], L[:, 1:]
            det = l0 ** 2 - np.einsum("ij,ij->i", l1, l1)
            x0 = (l0 * D[:, 0] - np.einsum("ij,ij->i", l1, D[:, 1:])) / det
            out[idx[:, 0]] = x0
            out[idx[:, 1:]] = (D[:, 1:] - x0[:, None] * l1) / l0[:, None]
        return out

    def max_step(self, u, du) -> float:
        """Largest alpha with u + alpha du in the cone (u interior)."""
        alpha = np.inf
        if self.l:
            neg = du[: self.l] < 0
            if np.any(neg):
                alpha = min(alpha, float((-u[: self.l][neg] / du[: self.l][neg]).min()))
        for _, idx in self.groups:
            alpha = min(alpha, _soc_step(u[idx], du[idx]))
        return alpha


def _soc_step(U, D) -> float:
    """Largest alpha keeping every row of ``U + alpha D`` in the second-order cone.

    The direction is mapped by the quadratic representation of ``U^-1/2``,
    which sends ``U`` to the identity; the step then ends where the mapped
    direction's smallest eigenvalue reaches -1.
    """
    u0, u1 = U[:, 0], U[:, 1:]
    lk = np.sqrt(np.maximum(u0 * u0 - np.einsum("ij,ij->i", u1, u1), 1e-300))
    ub0, ub1 = u0 / lk, u1 / lk[:, None]
    proj = ub0 * D[:, 0] - np.einsum("ij,ij->i", ub1, D[:, 1:])
    rho0 = proj / lk
    factor = (proj + D[:, 0]) / (ub0 + 1.0)
    rho1 = (D[:, 1:] - factor[:, None] * ub1) / lk[:, None]
    sigma = np.linalg.norm(rho1, axis=1) - rho0
    pos = sigma > 0
    return float(1.0 / sigma[pos].max()) if np.any(pos) else np.inf


class _Scaling:
    """Nesterov-Todd scaling W (symmetric) with W z = W^-1 s = lam."""

    def __init__(self, cones: _Cones, s: np.ndarray, z: np.ndarray):
        self.cones = cones
        if not (cones.min_eig(s) > 0 and cones.min_eig(z) > 0):
            raise FloatingPointError("iterate left the cone interior")
        l = cones.l
        self.d = np.sqrt(s[:l] / z[:l])
        self.blocks = []
        for dim, idx in cones.groups:
            S, Z = s[idx], z[idx]
            sn = np.sqrt(np.maximum(S[:, 0] ** 2 - np.einsum("ij,ij->i", S[:, 1:], S[:, 1:]), 1e-300))
            zn = np.sqrt(np.maximum(Z[:, 0] ** 2 - np.einsum("ij,ij->i", Z[:, 1:], Z[:, 1:]), 1e-300))
            eta = np.sqrt(sn / zn)
            sb, zb = S / sn[:, None], Z / zn[:, None]
            gam = np.sqrt(np.maximum((1.0 + np.einsum("ij,ij->i", sb, zb)) / 2.0, 1e-300))
            w = sb.copy()
            w[:, 0] += zb[:, 0]
            w[:, 1:] -= zb[:, 1:]
            w /= (2.0 * gam)[:, None]
            # hyperbolic Householder vector of the scaling point
            w[:, 0] += 1.0
            w /= np.sqrt(2.0 * w[:, :1])
            Jm = np.diag(np.r_[1.0, -np.ones(dim - 1)])
            ww = np.einsum("ki,kj->kij", w, w)
            W = eta[:, None, None] * (2.0 * ww - Jm)
            Jw = w * np.r_[1.0, -np.ones(dim - 1)]
            Winv = (2.0 * np.einsum("ki,kj->kij", Jw, Jw) - Jm) / eta[:, None, None]
            self.blocks.append((idx, W, Winv))
        self.lam = self.apply(z)

    def _apply(self, u, inverse: bool):
        out = np.empty_like(u)
        l = self.cones.l
        dd = 1.0 / self.d if inverse else self.d
        out[:l] = dd.reshape((-1,) + (1,) * (u.ndim - 1)) * u[:l]
        for idx, W, Winv in self.blocks:
            M = Winv if inverse else W
            if u.ndim == 1:
                out[idx] = np.einsum("kij,kj->ki", M, u[idx])
            else:
                out[idx] = np.einsum("kij,kjn->kin", M, u[idx])
        return out

    def apply(self, u):
        return self._apply(u, False)

    def inverse_matrix(self) -> sp.csr_matrix:
        rows, cols, vals = [np.arange(self.cones.l)], [np.arange(self.cones.l)], [1.0 / self.d]
        for idx, _, Winv in self.blocks:
            d = idx.shape[1]
            rows.append(np.repeat(idx, d, axis=1).ravel())
            cols.append(np.tile(idx, (1, d)).ravel())
            vals.append(Winv.ravel())
        m = self.cones.m
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(m, m))

    def apply_inv(self, u):
        return self._apply(u, True)


class _KKTPattern:
    """Sparsity of the scaled KKT matrix, fixed for the whole solve.

    Only the ``W^-1 G`` values change between iterations, so the CSC
    structure is built once and each factorisation just refills the data.
    """

    def __init__(self, A, G, cones: _Cones):
        n, p, m = G.shape[1], A.shape[0], G.shape[0]
        self.n, self.p, self.m = n, p, m
        Ai, Aj = np.nonzero(A)
        l = cones.l
        Oi, Oj = np.nonzero(G[:l])
        self.A_vals = A[Ai, Aj]
        self.O_rows, self.O_vals = Oi, G[Oi, Oj]
        self.socs = []
        gr, gc = [Oi], [Oj]
        for _, idx in cones.groups:
            cols = [np.flatnonzero(np.any(G[rows] != 0, axis=0)) for rows in idx]
            w = max(1, max(c.size for c in cols))
            colpad = np.zeros((idx.shape[0], w), dtype=int)
            keep = np.zeros((idx.shape[0], idx.shape[1], w), dtype=bool)
            for k, c in enumerate(cols):
                colpad[k, :c.size] = c
                keep[k, :, :c.size] = True
            sub = np.array([G[rows][:, cp] for rows, cp in zip(idx, colpad)])
            keep = keep.ravel()
            self.socs.append((sub, keep))
            d = idx.shape[1]
            gr.append(np.repeat(idx[:, :, None], w, axis=2).ravel()[keep])
            gc.append(np.repeat(colpad[:, None, :], d, axis=1).ravel()[keep])
        gr, gc = np.concatenate(gr), np.concatenate(gc)
        diag = n + p + np.arange(m)
        rows = np.concatenate([Aj, n + Ai, gc, n + p + gr, diag])
        cols = np.concatenate([n + Ai, Aj, n + p + gr, gc, diag])
        self.N = N = n + p + m
        self.order = np.lexsort((rows, cols))
        self.indices = rows[self.order].astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(cols, minlength=N))]).astype(np.int32)
        self._tail = -np.ones(m)

    def matrix(self, scaling: _Scaling) -> sp.csc_matrix:
        parts = [self.O_vals / scaling.d[self.O_rows]]
        for (sub, keep), (_, _, Winv) in zip(self.socs, scaling.blocks):
            parts.append(np.einsum("kij,kjw->kiw", Winv, sub).ravel()[keep])
        g = np.concatenate(parts)
        data = np.concatenate([self.A_vals, self.A_vals, g, g, self._tail])[self.order]
        return sp.csc_matrix((data, self.indices, self.indptr), shape=(self.N, self.N))


class _KKT:
    """Solves [[0, A', G'], [A, 0, 0], [G, 0, -W^2]] [x; y; z] = [bx; by; bz].

    Factorises the scaled form with unknown ``W z``, whose lower-right block
    is ``-I``; this stays well conditioned as iterates approach the boundary,
    unlike the normal equations. Refinement sweeps on the unscaled equations
    recover the digits lost in the factorisation.
    """

    def __init__(self, A, G, scaling: _Scaling, pattern: _KKTPattern, refine: int = 1):
        self.A, self.G, self.W = A, G, scaling
        self.n, self.p, self.m = pattern.n, pattern.p, pattern.m
        K = pattern.matrix(scaling)
        if not np.all(np.isfinite(K.data)):
            raise FloatingPointError("non-finite KKT matrix")
        try:
            self.lu = spla.splu(K)
        except RuntimeError as exc:  # exactly singular
            raise la.LinAlgError(str(exc)) from exc
        self.refine = refine

    def _raw(self, bx, by, bz):
        W, n, p = self.W, self.n, self.p
        sol = self.lu.solve(np.concatenate([bx, by, W.apply_inv(bz)]))
        return sol[:n], sol[n:n + p], W.apply_inv(sol[n + p:])

    def solve(self, bx, by, bz):
        W = self.W
        x, y, z = self._raw(bx, by, bz)
        for _ in range(self.refine):
            rx = bx - self.A.T @ y - self.G.T @ z
            ry = by - self.A @ x
            rz = bz - self.G @ x + W.apply(W.apply(z))
            dx, dy, dz = self._raw(rx, ry, rz)
            x, y, z = x + dx, y + dy, z + dz
        return x, y, z


# -- residuals ---------------------------------------------------------------------


def residuals(program: ConicProgram, x, y=None, z=None) -> ResidualReport:
    """Constraint violations of a primal (and optionally dual) point by direct substitution."""
    P = program
    x = np.asarray(x, dtype=float)
    cones = _Cones(P.l, P.q)
    eq = float(np.abs(P.A @ x - P.b).max(initial=0.0))
    s = P.h - P.G @ x

    def violations(u):
        orth = float(max(0.0, -u[: P.l].min(initial=np.inf))) if P.l else 0.0
        soc = 0.0
        for _, idx in cones.groups:
            blk = u[idx]
            soc = max(soc, float((np.linalg.norm(blk[:, 1:], axis=1) - blk[:, 0]).max()))
        return orth, soc

    orth, soc = violations(s)
    obj = float(P.c @ x)
    bscale = 1.0 + float(np.abs(P.b).max(initial=0.0))
    hscale = 1.0 + float(np.abs(P.h).max(initial=0.0))
    rep = dict(eq=eq, orthant=orth, soc=soc, objective=obj, eq_scaled=eq / bscale,
               cone_scaled=max(orth, soc) / hscale)
    if y is not None and z is not None:
        y, z = np.asarray(y, dtype=float), np.asarray(z, dtype=float)
        cscale = 1.0 + float(np.abs(P.c).max(initial=0.0))
        dres = float(np.abs(P.A.T @ y + P.G.T @ z + P.c).max(initial=0.0)) / cscale
        dorth, dsoc = violations(z)
        gap = obj + float(P.b @ y) + float(P.h @ z)
        rep.update(dual=dres, dual_cone=max(dorth, dsoc) / (1.0 + float(np.abs(z).max(initial=0.0))),
                   gap=gap, gap_scaled=abs(gap) / (1.0 + abs(obj)))
    return ResidualReport(**rep)


# -- presolve ----------------------------------------------------------------------


@dataclass
class _Presolved:
    program: ConicProgram
    keep: np.ndarray  # kept variable indices
    fixed: list  # (row, col, value) in removal order
    keep_rows: np.ndarray
    infeasible: bool = False
    g_scale: np.ndarray | None = None  # row scaling of G, h (see _equilibrate)
    a_scale: np.ndarray | None = None  # row scaling of A, b
    c_scale: float = 1.0  # scaling of the objective
    x_scale: np.ndarray | None = None  # column scaling
    unscaled: ConicProgram | None = None  # reduced program before scaling


def _presolve(P: ConicProgram) -> _Presolved:
    """Remove variables pinned by single-entry equality rows."""
    A, b = P.A.copy(), P.b.copy()
    h = P.h.copy()
    alive_cols = np.ones(P.n, dtype=bool)
    alive_rows = np.ones(A.shape[0], dtype=bool)
    values = np.zeros(P.n)
    fixed = []
    infeasible = False
    changed = True
    while changed:
        changed = False
        for i in np.flatnonzero(alive_rows):
            nz = np.flatnonzero((A[i] != 0) & alive_cols)
            if nz.size == 0:
                alive_rows[i] = False
                if abs(b[i]) > 1e-12 * (1 + np.abs(P.b).max()):
                    infeasible = True
                continue
            if nz.size == 1:
                j = nz[0]
                val = b[i] / A[i, j]
                values[j] = val
                b -= A[:, j] * val
                h -= P.G[:, j] * val
                alive_cols[j] = False
                alive_rows[i] = False
                fixed.append((i, j, val))
                changed = True
    keep = np.flatnonzero(alive_cols)
    rows = np.flatnonzero(alive_rows)
    reduced = ConicProgram(c=P.c[keep], A=A[np.ix_(rows, keep)], b=b[rows], G=P.G[:, keep],
                           h=h, l=P.l, q=P.q)
    return _Presolved(reduced, keep, fixed, rows, infeasible)


def _equilibrate(pre: _Presolved, sweeps: int = 5) -> None:
    """Ruiz equilibration of the reduced program, then a scaling of ``c``.

    Orthant rows are scaled one by one and each second-order cone block by a
    single factor, so the cones are unchanged; columns are scaled freely.
    Without this, termination tests compare quantities in the units of ``c``
    against quantities in the units of ``h``, and a change of force units can
    fake an infeasibility or unboundedness certificate.
    """
    P = pre.unscaled = pre.program
    groups = _Cones(P.l, P.q).groups
    A, G = np.array(P.A, dtype=float), np.array(P.G, dtype=float)
    dg, da, dx = np.ones(P.m), np.ones(A.shape[0]), np.ones(P.n)

    def inv_sqrt(nrm):
        return np.where(nrm > 0, 1.0 / np.sqrt(np.where(nrm > 0, nrm, 1.0)), 1.0)

    for _ in range(sweeps):
        rg = inv_sqrt(np.abs(G).max(axis=1, initial=0.0))
        for _, idx in groups:
            rg[idx] = rg[idx].min(axis=1, keepdims=True)
        ra = inv_sqrt(np.abs(A).max(axis=1, initial=0.0))
        G *= rg[:, None]
        A *= ra[:, None]
        col = np.maximum(np.abs(G).max(axis=0, initial=0.0), np.abs(A).max(axis=0, initial=0.0))
        rx = inv_sqrt(col)
        G *= rx[None, :]
        A *= rx[None, :]
        dg, da, dx = dg * rg, da * ra, dx * rx
    c = P.c * dx
    cmax = float(np.abs(c).max(initial=0.0))
    pre.c_scale = 1.0 / cmax if cmax > 0 else 1.0
    pre.program = ConicProgram(c=c * pre.c_scale, A=A, b=P.b * da, G=G, h=P.h * dg, l=P.l, q=P.q)
    pre.g_scale, pre.a_scale, pre.x_scale = dg, da, dx


def _postsolve(P: ConicProgram, pre: _Presolved, x_r, y_r, z):
    x = np.zeros(P.n)
    x[pre.keep] = x_r
    for _, j, val in pre.fixed:
        x[j] = val
    y = np.zeros(P.A.shape[0])
    y[pre.keep_rows] = y_r
    # dual of a removed row makes its column's dual residual vanish; later
    # removals may touch earlier columns, so go backwards
    for i, j, _ in reversed(pre.fixed):
        r = P.c[j] + P.A[:, j] @ y + P.G[:, j] @ z - P.A[i, j] * y[i]
        y[i] = -r / P.A[i, j]
    return x, y


# -- main loop -----------------------------------------------------------------------


def solve(program: ConicProgram, max_iter: int = 100, tol: float = 1e-8,
          presolve: bool = True) -> ConicSolution:
    """Solve ``program``; the returned residuals are recomputed from scratch."""
    P0 = program
    pre = _presolve(P0) if presolve else _Presolved(P0, np.arange(P0.n), [], np.arange(P0.A.shape[0]))
    if pre.infeasible:
        return _finish(P0, pre, INFEASIBLE, None, 0, {"reason": "inconsistent fixed equalities"})
    _equilibrate(pre)
    P = pre.program
    if P.n == 0:
        z = np.zeros(P.m)
        status = OPTIMAL if P.h.size == 0 or _Cones(P.l, P.q).min_eig(P.h) >= 0 else INFEASIBLE
        return _finish(P0, pre, status, (np.zeros(0), np.zeros(P.A.shape[0]), z, P.h.copy(), 1.0, 0.0), 0, {})
    return _hsd(P0, pre, max_iter, tol)


def _hsd(P0, pre, max_iter, tol):
    P = pre.program
    A, b, c, G, h = P.A, P.b, P.c, P.G, P.h
    cones = _Cones(P.l, P.q)
    m = cones.m
    e = cones.e()

    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))
    # convergence is judged in the original units, with the same normalisation
    # as residuals(), so that an optimal status is also a certified one
    U = pre.unscaled
    wx = 1.0 / (pre.c_scale * pre.x_scale) / (1.0 + np.abs(U.c).max(initial=0.0))
    wy = 1.0 / pre.a_scale / (1.0 + np.abs(U.b).max(initial=0.0))
    wz = 1.0 / pre.g_scale / (1.0 + np.abs(U.h).max(initial=0.0))

    # starting point: least-squares primal and dual points shifted into the cone
    ident = _Scaling(cones, e.copy(), e.copy())
    try:
        pattern = _KKTPattern(A, G, cones)
        kkt = _KKT(A, G, ident, pattern)
    except (la.LinAlgError, ValueError) as exc:
        return _finish(P0, pre, NUMERICAL_FAILURE, None, 0, {"reason": f"initial KKT: {exc}"})
    x, _, zz = kkt.solve(np.zeros(P.n), b, h)
    s = -zz
    _, y, z = kkt.solve(-c, np.zeros(A.shape[0]), np.zeros(m))
    for u in (s, z):
        t = -cones.min_eig(u)
        if t >= -1e-8 * max(1.0, np.linalg.norm(u)):
            u += (1.0 + t) * e
    tau, kappa = 1.0, 1.0

    info = {}
    status = MAX_ITER
    it = 0
    converged = None  # last iterate meeting the tolerances in scaled units
    for it in range(max_iter + 1):
        hrx = -A.T @ y - G.T @ z
        rx = hrx - c * tau
        hry = A @ x
        ry = hry - b * tau
        hrz = s + G @ x
        rz = hrz - h * tau
        cx, by, hz = c @ x, b @ y, h @ z
        rt = kappa + cx + by + hz
        mu = (s @ z + tau * kappa) / (cones.degree + 1)

        pcost, dcost = cx / tau, -(by + hz) / tau
        gap = (s @ z) / tau ** 2
        if pcost < 0:
            relgap = gap / -pcost
        elif dcost > 0:
            relgap = gap / dcost
        else:
            relgap = np.inf
        pres = max(np.linalg.norm(ry) / resy0, np.linalg.norm(rz) / resz0) / tau
        dres = np.linalg.norm(rx) / resx0 / tau
        pinfres = (np.linalg.norm(hrx) / resx0 / -(hz + by)) if (hz + by) < 0 else np.inf
        dinfres = (max(np.linalg.norm(hry) / resy0, np.linalg.norm(hrz) / resz0) / -cx) if cx < 0 else np.inf
        info = {"pres": pres, "dres": dres, "gap": gap, "relgap": relgap, "mu": mu}

        if pres <= tol and dres <= tol and (gap <= tol or relgap <= tol):
            obj = abs(pcost) / pre.c_scale
            pres_o = max(np.abs(ry * wy).max(initial=0.0), np.abs(rz * wz).max(initial=0.0)) / tau
            dres_o = np.abs(rx * wx).max(initial=0.0) / tau
            gap_o = max(abs(cx + by + hz) / tau, s @ z / tau ** 2) / pre.c_scale / (1.0 + obj)
            converged = (x, y, z, s, tau, kappa, it, dict(info))
            if max(pres_o, dres_o, gap_o) <= tol:
                status = OPTIMAL
                break
        if pinfres <= tol:
            status = INFEASIBLE
            break
        if dinfres <= tol:
            status = UNBOUNDED
            break
        if it == max_iter:
            break
        if converged is not None and it - converged[6] >= 5:
            break

        try:
            W = _Scaling(cones, s, z)
            kkt = _KKT(A, G, W, pattern)
        except (la.LinAlgError, ValueError, FloatingPointError) as exc:
            status = NUMERICAL_FAILURE
            info["reason"] = f"KKT factorisation: {exc}"
            break
        lam = W.lam
        x1, y1, z1 = kkt.solve(-c, b, h)
        denom = (c @ x1 + b @ y1 + h @ z1) - kappa / tau

        def newton(dxr, dyr, dzr, dtr, ds_, dk_):
            # residual targets in the "rho" convention: rho_x = -rx, rho_y = -ry
            wds = W.apply(cones.jordan_solve(lam, ds_))
            x2, y2, z2 = kkt.solve(-dxr, dyr, -dzr + wds)
            dtau = (-dtr + dk_ / tau - (c @ x2 + b @ y2 + h @ z2)) / denom
            dx, dy, dz = x2 + dtau * x1, y2 + dtau * y1, z2 + dtau * z1
            dsv = -wds - W.apply(W.apply(dz))
            dkap = (-dk_ - kappa * dtau) / tau
            return dx, dy, dz, dtau, dsv, dkap

        def step_to_boundary(dsv, dz, dtau, dkap):
            a = min(cones.max_step(s, dsv), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        rho = (-rx, -ry, rz, rt)
        lamsq = cones.jordan(lam, lam)
        aff = newton(*rho, lamsq, tau * kappa)
        if not all(np.all(np.isfinite(v)) for v in aff):
            status = NUMERICAL_FAILURE
            info["reason"] = "non-finite affine direction"
            break
        a_aff = min(1.0, step_to_boundary(aff[4], aff[2], aff[3], aff[5]))
        sigma = (1.0 - a_aff) ** 3
        corr = cones.jordan(W.apply_inv(aff[4]), W.apply(aff[2]))
        ds_c = lamsq + corr - sigma * mu * e
        dk_c = tau * kappa + aff[3] * aff[5] - sigma * mu
        f = 1.0 - sigma
        dx, dy, dz, dtau, dsv, dkap = newton(f * rho[0], f * rho[1], f * rho[2], f * rho[3], ds_c, dk_c)
        if not all(np.all(np.isfinite(v)) for v in (dx, dy, dz, dsv)) or not np.isfinite(dtau):
            status = NUMERICAL_FAILURE
            info["reason"] = "non-finite combined direction"
            break
        alpha = min(1.0, 0.99 * step_to_boundary(dsv, dz, dtau, dkap))
        if alpha < 1e-12:
            status = NUMERICAL_FAILURE
            info["reason"] = "step length collapsed"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * dsv
        tau += alpha * dtau
        kappa += alpha * dkap

    if status != OPTIMAL and converged is not None:
        # polishing towards the unscaled tolerances stalled; fall back
        x, y, z, s, tau, kappa, _, info = converged
        info["polish"] = "stopped short of the unscaled tolerances"
        status = OPTIMAL
    info["tau"], info["kappa"] = tau, kappa
    return _finish(P0, pre, status, (x, y, z, s, tau, kappa), it, info)


def _finish(P0, pre, status, state, iterations, info) -> ConicSolution:
    m = P0.m
    if state is None:
        nan = np.full
        return ConicSolution(status, nan(P0.n, np.nan), nan(P0.A.shape[0], np.nan), nan(m, np.nan),
                             nan(m, np.nan), iterations, info=info)
    x, y, z, s, tau, kappa = state
    if status == OPTIMAL:
        x, y, z, s = x / tau, y / tau, z / tau, s / tau
    elif status == INFEASIBLE:
        scale = -(pre.program.b @ y + pre.program.h @ z)
        y, z = y / scale, z / scale
        x = np.full_like(x, np.nan)
    elif status == UNBOUNDED:
        scale = -(pre.program.c @ x)
        x, s = x / scale, s / scale
    else:
        x, y, z, s = x / tau, y / tau, z / tau, s / tau
    if pre.g_scale is not None:
        # back to the unscaled rows; certificate normalisations survive this
        cs = {INFEASIBLE: 1.0, UNBOUNDED: 1.0}.get(status, pre.c_scale)
        z, s = z * pre.g_scale / cs, s / pre.g_scale
        y = y * pre.a_scale / cs
        x = x * pre.x_scale
        if status == UNBOUNDED:
            x, s = x * pre.c_scale, s * pre.c_scale
    if status == INFEASIBLE:
        xf = np.full(P0.n, np.nan)
        yf = np.zeros(P0.A.shape[0])
        yf[pre.keep_rows] = y
        return ConicSolution(status, xf, yf, z, s, iterations, info=info)
    xf, yf = _postsolve(P0, pre, x, y, z)
    if status == UNBOUNDED:
        return ConicSolution(status, xf, yf, z, s, iterations, info=info)
    rep = residuals(P0, xf, yf, z)
    sol = ConicSolution(status, xf, yf, z, P0.h - P0.G @ xf, iterations,
                        primal_objective=float(P0.c @ xf),
                        dual_objective=float(-(P0.b @ yf) - P0.h @ z),
                        residuals=rep, info=info)
    if status == OPTIMAL and not rep.certified():
        log.warning("solver reported optimal but recomputed residuals are %s", rep)
    return sol


# -- JSON helpers --------------------------------------------------------------------


def dump_solution(sol: ConicSolution, path) -> None:
    with open(path, "w") as fh:
        json.dump(sol.to_dict(), fh, indent=1, allow_nan=True)

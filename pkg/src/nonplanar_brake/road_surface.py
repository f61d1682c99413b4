"""Parametric ribbon road surfaces and their differential geometry.

A ribbon is ``x(s, y) = c(s) + y * b(s)`` where ``c`` is a unit-speed
centreline built from heading, grade and bank profiles and ``b`` is the
lateral unit vector rotated about the centreline tangent by the bank angle.
The centreline frame is ``F(s) = Rz(psi) Ry(-grade) Rx(-bank)`` with columns
``(t, b, u)``; all partial derivatives are assembled from the frame's local
angular rates, so they are exact up to floating point.

Sign conventions: ``y`` grows to the left, positive curvature turns left and
positive bank raises the right-hand edge (the outside of a left turn). An
off-camber left turn therefore has negative bank.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import DegenerateSurface, OutOfDomain

KINDS = ("plane", "banked_arc", "crest", "ribbon")

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_MAX_SEGMENT = 2.0  # m, centreline quadrature segment length


class _Piecewise:
    """Scalar evaluation of a piecewise polynomial and two derivatives.

    Wraps the coefficient arrays of a scipy ``PPoly`` so a single ``s`` can be
    evaluated without array overhead (the simulator calls this ~10^5 times).
    """

    def __init__(self, ppoly):
        self.breaks = [float(b) for b in ppoly.x]
        self.coef = [[float(c) for c in ppoly.c[:, i]] for i in range(ppoly.c.shape[1])]

    def _interval(self, s: float) -> int:
        i = bisect_right(self.breaks, s) - 1
        return min(max(i, 0), len(self.breaks) - 2)

    def __call__(self, s: float) -> tuple[float, float, float]:
        i = self._interval(s)
        d = s - self.breaks[i]
        c = self.coef[i]
        k = len(c) - 1
        f = f1 = f2 = 0.0
        for j, a in enumerate(c):
            p = k - j
            f = f * d + a
            if j < k:
                f1 = f1 * d + p * a
            if j < k - 1:
                f2 = f2 * d + p * (p - 1) * a
        return f, f1, f2


def _spline(knots, values):
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
        raise ValueError("profile needs matching 1-d knot and value arrays with >= 2 entries")
    if np.any(np.diff(knots) <= 0):
        raise ValueError("profile knots must be strictly increasing")
    return CubicSpline(knots, values, bc_type="natural")


@dataclass(frozen=True)
class SurfaceJet:
    x: np.ndarray
    x_s: np.ndarray
    x_y: np.ndarray
    x_ss: np.ndarray
    x_sy: np.ndarray
    x_yy: np.ndarray
    e_n: np.ndarray
    valid: bool = True


@dataclass(frozen=True)
class FundamentalForms:
    I: np.ndarray
    II: np.ndarray


@dataclass(frozen=True)
class SurfaceFrame:
    theta_p: float
    theta_s: float
    Q: np.ndarray
    J: np.ndarray
    R_gb: np.ndarray  # columns are body e1, e2, e3 in world coordinates


@dataclass(frozen=True, eq=False)
class RoadSurface:
    """Immutable ribbon road surface on ``[0, s_max] x [-half_width, half_width]``.

    ``plane``, ``banked_arc`` and ``crest`` are constructed as ribbons with
    constant or linear profiles; ``kind`` and ``meta`` only record how the
    surface was specified so it can be serialised back.
    """

    kind: str
    s_max: float
    half_width: float
    knots_s: np.ndarray
    kappa_c: np.ndarray
    bank: np.ndarray
    grade: np.ndarray
    heading0: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown road kind {self.kind!r}")
        if not (self.s_max > 0 and self.half_width > 0):
            raise ValueError("s_max and half_width must be positive")
        knots = np.asarray(self.knots_s, dtype=float)
        if abs(knots[0]) > 1e-12 or abs(knots[-1] - self.s_max) > 1e-9 * max(1.0, self.s_max):
            raise ValueError("profile knots must span [0, s_max]")
        kappa = _spline(knots, self.kappa_c)
        set_ = object.__setattr__
        set_(self, "knots_s", knots)
        set_(self, "kappa_c", np.asarray(self.kappa_c, dtype=float))
        set_(self, "bank", np.asarray(self.bank, dtype=float))
        set_(self, "grade", np.asarray(self.grade, dtype=float))
        set_(self, "_psi", _Piecewise(kappa.antiderivative()))
        set_(self, "_psi_pp", kappa.antiderivative())
        set_(self, "_bank", _Piecewise(_spline(knots, self.bank)))
        set_(self, "_grade", _Piecewise(_spline(knots, self.grade)))
        set_(self, "_bank_pp", _spline(knots, self.bank))
        set_(self, "_grade_pp", _spline(knots, self.grade))
        self._build_centerline()

    # -- constructors ---------------------------------------------------

    @classmethod
    def ribbon(cls, s_max, half_width, knots_s, kappa_c, bank, grade, heading0=0.0):
        return cls("ribbon", float(s_max), float(half_width), knots_s, kappa_c, bank, grade,
                   float(heading0))

    @classmethod
    def plane(cls, s_max=100.0, half_width=5.0):
        k = [0.0, s_max]
        return cls("plane", float(s_max), float(half_width), k, [0.0, 0.0], [0.0, 0.0],
                   [0.0, 0.0], meta={})

    @classmethod
    def banked_arc(cls, radius, bank_percent, arc_angle=math.pi, half_width=5.0):
        """Constant-radius arc; ``radius > 0`` turns left, ``< 0`` turns right.

        Positive ``bank_percent`` is a stabilising bank for either direction,
        negative is off-camber.
        """
        if radius == 0 or arc_angle <= 0:
            raise ValueError("banked_arc needs nonzero radius and positive arc_angle")
        s_max = abs(radius) * arc_angle
        turn = math.copysign(1.0, radius)
        phi = turn * math.atan(bank_percent / 100.0)
        k = [0.0, s_max]
        meta = {"radius": radius, "bank_percent": bank_percent, "arc_angle": arc_angle}
        return cls("banked_arc", s_max, float(half_width), k, [1.0 / radius] * 2, [phi] * 2,
                   [0.0, 0.0], meta=meta)

    @classmethod
    def crest(cls, vertical_radius, s_max=30.0, half_width=5.0, apex_s=0.0):
        """Vertical circular crest with its apex at ``apex_s``."""
        if vertical_radius <= 0:
            raise ValueError("vertical_radius must be positive")
        k = [0.0, s_max]
        grade = [apex_s / vertical_radius, -(s_max - apex_s) / vertical_radius]
        meta = {"vertical_radius": vertical_radius, "apex_s": apex_s}
        return cls("crest", float(s_max), float(half_width), k, [0.0, 0.0], [0.0, 0.0], grade,
                   meta=meta)

    # -- centreline -----------------------------------------------------

    def _angles(self, s):
        psi, dpsi, ddpsi = self._psi(s)
        return psi + self.heading0, dpsi, ddpsi

    def _tangents(self, s: np.ndarray) -> np.ndarray:
        psi = self._psi_pp(s) + self.heading0
        gam = self._grade_pp(s)
        cg = np.cos(gam)
        return np.stack([cg * np.cos(psi), cg * np.sin(psi), np.sin(gam)], axis=-1)

    def _build_centerline(self):
        nodes = [0.0]
        for a, b in zip(self.knots_s[:-1], self.knots_s[1:]):
            n = max(1, int(math.ceil((b - a) / _MAX_SEGMENT)))
            nodes.extend(np.linspace(a, b, n + 1)[1:].tolist())
        nodes = np.asarray(nodes)
        h = np.diff(nodes)
        mid = 0.5 * (nodes[:-1] + nodes[1:])
        pts = mid[:, None] + 0.5 * h[:, None] * _GL_NODES[None, :]
        t = self._tangents(pts.ravel()).reshape(pts.shape + (3,))
        seg = 0.5 * h[:, None] * np.einsum("j,ijk->ik", _GL_WEIGHTS, t)
        pos = np.vstack([np.zeros(3), np.cumsum(seg, axis=0)])
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_node_pos", pos)

    def centerline(self, s: float) -> np.ndarray:
        i = int(np.clip(np.searchsorted(self._nodes, s, side="right") - 1, 0, len(self._nodes) - 2))
        a = self._nodes[i]
        h = s - a
        if h == 0.0:
            return self._node_pos[i].copy()
        pts = a + 0.5 * h * (1.0 + _GL_NODES)
        t = self._tangents(pts)
        return self._node_pos[i] + 0.5 * h * (_GL_WEIGHTS @ t)

    # -- local frame ------------------------------------------------------

    def frame_rates(self, s: float):
        """Centreline frame ``(t, b, u)``, local rates ``w`` and their s-derivative ``dw``.

        ``d/ds [t b u] = [t b u] hat(w)``.
        """
        psi, k, dk = self._angles(s)
        gam, dgam, ddgam = self._grade(s)
        phi, dphi, ddphi = self._bank(s)
        cps, sps = math.cos(psi), math.sin(psi)
        cg, sg = math.cos(gam), math.sin(gam)
        cf, sf = math.cos(phi), math.sin(phi)

        t = (cg * cps, cg * sps, sg)
        b0 = (-sps, cps, 0.0)
        u0 = (-sg * cps, -sg * sps, cg)
        b = tuple(cf * p - sf * q for p, q in zip(b0, u0))
        u = tuple(sf * p + cf * q for p, q in zip(b0, u0))

        w1 = k * sg - dphi
        w2 = -dgam * cf - k * cg * sf
        w3 = k * cg * cf - dgam * sf
        dw1 = dk * sg + k * cg * dgam - ddphi
        dw2 = (-ddgam * cf + dgam * sf * dphi - dk * cg * sf + k * sg * dgam * sf
               - k * cg * cf * dphi)
        dw3 = (dk * cg * cf - k * sg * dgam * cf - k * cg * sf * dphi - ddgam * sf
               - dgam * cf * dphi)
        return t, b, u, (w1, w2, w3), (dw1, dw2, dw3)

    def contains(self, s: float, y: float) -> bool:
        tol = 1e-9 * max(1.0, self.s_max)
        return -tol <= s <= self.s_max + tol and abs(y) <= self.half_width * (1 + 1e-12)

    def check_domain(self, s: float, y: float):
        if not self.contains(s, y):
            raise OutOfDomain(f"(s={s}, y={y}) outside [0, {self.s_max}] x "
                              f"[-{self.half_width}, {self.half_width}]")

    def jet(self, s: float, y: float, position: bool = True) -> SurfaceJet:
        return eval_jet(self, s, y, position=position)

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind == "plane":
            return {"kind": "plane", "s_max": self.s_max, "half_width": self.half_width}
        if self.kind == "banked_arc":
            return {"kind": "banked_arc", "half_width": self.half_width, **self.meta}
        if self.kind == "crest":
            return {"kind": "crest", "s_max": self.s_max, "half_width": self.half_width,
                    **self.meta}
        return {
            "kind": "ribbon",
            "s_max": self.s_max,
            "half_width": self.half_width,
            "heading0": self.heading0,
            "knots_s": self.knots_s.tolist(),
            "kappa_c": self.kappa_c.tolist(),
            "bank": self.bank.tolist(),
            "grade": self.grade.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoadSurface":
        kind = d.get("kind")
        if kind == "plane":
            return cls.plane(d.get("s_max", 100.0), d.get("half_width", 5.0))
        if kind == "banked_arc":
            return cls.banked_arc(d["radius"], d.get("bank_percent", 0.0),
                                  d.get("arc_angle", math.pi), d.get("half_width", 5.0))
        if kind == "crest":
            return cls.crest(d["vertical_radius"], d.get("s_max", 30.0),
                             d.get("half_width", 5.0), d.get("apex_s", 0.0))
        if kind == "ribbon":
            return cls.ribbon(d["s_max"], d["half_width"], d["knots_s"], d["kappa_c"],
                              d["bank"], d["grade"], d.get("heading0", 0.0))
        raise ValueError(f"unknown road kind {kind!r}")


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _comb(*terms):
    """Linear combination of 3-tuples given as (coef, vec) pairs."""
    out = [0.0, 0.0, 0.0]
    for c, v in terms:
        out[0] += c * v[0]
        out[1] += c * v[1]
        out[2] += c * v[2]
    return out


def eval_jet(surface: RoadSurface, s: float, y: float, position: bool = True) -> SurfaceJet:
    """Position, exact partials up to second order and unit normal at ``(s, y)``.

    With ``position=False`` the (quadrature-based) position is skipped and
    ``x`` is filled with NaN; all derivative data is unaffected.
    """
    surface.check_domain(s, y)
    t, b, u, (w1, w2, w3), (dw1, dw2, dw3) = surface.frame_rates(s)
    # d/ds of the frame vectors
    dt = _comb((w3, b), (-w2, u))
    db = _comb((-w3, t), (w1, u))
    du = _comb((w2, t), (-w1, b))
    ddb = _comb((-dw3, t), (-w3, dt), (dw1, u), (w1, du))

    x_s = _comb((1.0, t), (y, db))
    x_ss = _comb((1.0, dt), (y, ddb))
    n = _cross(x_s, b)
    norm = math.sqrt(n[0] ** 2 + n[1] ** 2 + n[2] ** 2)
    if norm < 1e-9:
        raise DegenerateSurface(f"surface is singular at (s={s}, y={y})")
    if position:
        x = surface.centerline(s) + y * np.asarray(b)
    else:
        x = np.full(3, np.nan)
    return SurfaceJet(
        x=np.asarray(x, dtype=float),
        x_s=np.asarray(x_s),
        x_y=np.asarray(b),
        x_ss=np.asarray(x_ss),
        x_sy=np.asarray(db),
        x_yy=np.zeros(3),
        e_n=np.asarray(n) / norm,
        valid=True,
    )


def fundamental_forms(jet: SurfaceJet) -> FundamentalForms:
    if not jet.valid:
        raise DegenerateSurface("invalid jet")
    xs, xy, en = jet.x_s, jet.x_y, jet.e_n
    I = np.array([[xs @ xs, xs @ xy], [xy @ xs, xy @ xy]])
    b12 = jet.x_sy @ en
    II = np.array([[jet.x_ss @ en, b12], [b12, jet.x_yy @ en]])
    return FundamentalForms(I=I, II=II)


def rot2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def surface_frame(jet: SurfaceJet, theta_s: float) -> SurfaceFrame:
    """Q-R form of the surface/body Jacobian and the body rotation for heading ``theta_s``."""
    xs, xy = jet.x_s, jet.x_y
    ns, ny = math.sqrt(xs @ xs), math.sqrt(xy @ xy)
    ratio = (xs @ xy) / (ns * ny)
    if abs(ratio) >= 1.0 - 1e-12:
        raise DegenerateSurface("surface tangents are parallel")
    theta_p = -math.asin(ratio)
    Q = np.array([[ns, 0.0], [-math.sin(theta_p) * ny, math.cos(theta_p) * ny]])
    J = Q @ rot2(theta_s)
    e_s = xs / ns
    e_perp = np.cross(jet.e_n, e_s)
    c, s = math.cos(theta_s), math.sin(theta_s)
    e1 = c * e_s + s * e_perp
    e2 = -s * e_s + c * e_perp
    R_gb = np.column_stack([e1, e2, jet.e_n])
    return SurfaceFrame(theta_p=theta_p, theta_s=theta_s, Q=Q, J=J, R_gb=R_gb)


def lane_arclength(surface: RoadSurface, y: float, s0: float, s1: float) -> float:
    """Length of the constant-``y`` curve between ``s0`` and ``s1``."""
    if not s0 < s1:
        raise ValueError("lane_arclength needs s0 < s1")
    surface.check_domain(s0, y)
    surface.check_domain(s1, y)
    if y == 0.0:
        # s is centreline arc length
        return s1 - s0

    def speed(sig):
        t, b, u, (w1, w2, w3), _ = surface.frame_rates(sig)
        a, c = 1.0 - y * w3, y * w1
        return math.sqrt(a * a + c * c)

    inner = [k for k in surface.knots_s if s0 < k < s1]
    val, _ = quad(speed, s0, s1, points=inner or None, epsabs=0.0, epsrel=1e-11, limit=400)
    return val


# -- finite-difference validation -------------------------------------------------


def _rel_err(a, ref, floor=1e-2):
    a, ref = np.asarray(a, dtype=float), np.asarray(ref, dtype=float)
    return float(np.linalg.norm(a - ref) / max(np.linalg.norm(a), floor))


def fd_jet(surface: RoadSurface, s: float, y: float, step: float = 1e-5) -> dict:
    """Central-difference estimates of the jet.

    First partials come from differences of positions; second partials from
    differences of the first-partial outputs (second differences of positions
    lose too many digits at this step size).
    """
    def pos(a, b):
        return eval_jet(surface, a, b).x

    def jet(a, b):
        return eval_jet(surface, a, b, position=False)

    h = step
    x_s = (pos(s + h, y) - pos(s - h, y)) / (2 * h)
    x_y = (pos(s, y + h) - pos(s, y - h)) / (2 * h)
    jp, jm = jet(s + h, y), jet(s - h, y)
    kp, km = jet(s, y + h), jet(s, y - h)
    x_ss = (jp.x_s - jm.x_s) / (2 * h)
    x_sy = (kp.x_s - km.x_s) / (2 * h)
    x_ys = (jp.x_y - jm.x_y) / (2 * h)
    x_yy = (kp.x_y - km.x_y) / (2 * h)
    n = np.cross(x_s, x_y)
    return {"x_s": x_s, "x_y": x_y, "x_ss": x_ss, "x_sy": x_sy, "x_ys": x_ys, "x_yy": x_yy,
            "e_n": n / np.linalg.norm(n)}


def check_surface(surface: RoadSurface, ns: int = 20, ny: int = 5, step: float = 1e-5) -> dict:
    """Max relative error between analytic and finite-difference partials on a grid.

    Returns a dict keyed by partial name (plus ``I`` and ``II`` for the
    fundamental forms) and ``max`` for the overall worst case.
    """
    margin = 10 * step
    s_grid = np.linspace(margin, surface.s_max - margin, ns)
    y_grid = np.linspace(-surface.half_width + margin, surface.half_width - margin, ny)
    worst: dict[str, float] = {}
    for s in s_grid:
        for y in y_grid:
            jet = eval_jet(surface, float(s), float(y))
            fd = fd_jet(surface, float(s), float(y), step)
            errs = {
                "x_s": _rel_err(jet.x_s, fd["x_s"]),
                "x_y": _rel_err(jet.x_y, fd["x_y"]),
                "x_ss": _rel_err(jet.x_ss, fd["x_ss"]),
                "x_sy": max(_rel_err(jet.x_sy, fd["x_sy"]), _rel_err(jet.x_sy, fd["x_ys"])),
                "x_yy": _rel_err(jet.x_yy, fd["x_yy"]),
                "e_n": _rel_err(jet.e_n, fd["e_n"]),
            }
            forms = fundamental_forms(jet)
            I_fd = np.array([[fd["x_s"] @ fd["x_s"], fd["x_s"] @ fd["x_y"]],
                             [fd["x_y"] @ fd["x_s"], fd["x_y"] @ fd["x_y"]]])
            en = fd["e_n"]
            II_fd = np.array([[fd["x_ss"] @ en, fd["x_sy"] @ en], [fd["x_ys"] @ en, fd["x_yy"] @ en]])
            errs["I"] = _rel_err(forms.I, I_fd)
            errs["II"] = _rel_err(forms.II, II_fd)
            for k, v in errs.items():
                worst[k] = max(worst.get(k, 0.0), v)
    worst["max"] = max(worst.values())
    return worst

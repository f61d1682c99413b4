"""Compiled right-hand side of the simulator's vehicle model.

Everything is scalar arithmetic on flat float arrays so numba can compile it;
without numba the same functions run as plain Python.

Array layouts
-------------
params: m I1 I2 I3 h l_f l_r t_f t_r mu g k_drag k_lift tire_B tire_C tire_E D_scale literal
geom:   I11 I12 I22 II11 II12 II22 Q11 Q21 Q22 e_s(3) e_perp(3) e_n(3) a_s a_y
aux:    s_dot y_dot w1 w2 a1 a2 Ft1 Ft2 Ft3 Fx Fy Fz N_fr N_fl N_rr N_rl util
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

N_PARAMS = 18
N_GEOM = 20
N_AUX = 17


@njit(cache=True)
def _pp(breaks, coef, s):
    """Value and two derivatives of a scipy-layout piecewise polynomial."""
    i = np.searchsorted(breaks, s, side="right") - 1
    i = min(max(i, 0), breaks.size - 2)
    d = s - breaks[i]
    k = coef.shape[0] - 1
    f = f1 = f2 = 0.0
    for j in range(k + 1):
        a = coef[j, i]
        q = k - j
        f = f * d + a
        if j < k:
            f1 = f1 * d + q * a
        if j < k - 1:
            f2 = f2 * d + q * (q - 1) * a
    return f, f1, f2


@njit(cache=True)
def geometry(xp, cp, heading0, xb, cb, xg, cg, s, y, out):
    """Ribbon surface geometry at ``(s, y)`` in the ``geom`` layout.

    Takes the heading, bank and grade profiles as piecewise polynomials and
    mirrors ``road_surface.eval_jet`` followed by ``simulator.surface_geometry``.
    """
    psi, k, dk = _pp(xp, cp, s)
    psi += heading0
    gam, dgam, ddgam = _pp(xg, cg, s)
    phi, dphi, ddphi = _pp(xb, cb, s)
    cps, sps = math.cos(psi), math.sin(psi)
    cga, sga = math.cos(gam), math.sin(gam)
    cf, sf = math.cos(phi), math.sin(phi)
    t = np.array([cga * cps, cga * sps, sga])
    b0 = np.array([-sps, cps, 0.0])
    u0 = np.array([-sga * cps, -sga * sps, cga])
    b = cf * b0 - sf * u0
    u = sf * b0 + cf * u0
    w1 = k * sga - dphi
    w2 = -dgam * cf - k * cga * sf
    w3 = k * cga * cf - dgam * sf
    dw1 = dk * sga + k * cga * dgam - ddphi
    dw3 = (dk * cga * cf - k * sga * dgam * cf - k * cga * sf * dphi - ddgam * sf
           - dgam * cf * dphi)
    dt = w3 * b - w2 * u
    db = -w3 * t + w1 * u
    du = w2 * t - w1 * b
    ddb = -dw3 * t - w3 * dt + dw1 * u + w1 * du
    xs = t + y * db
    xss = dt + y * ddb
    n = np.cross(xs, b)
    en = n / math.sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])
    I11, I12, I22 = xs @ xs, xs @ b, b @ b
    ns, ny = math.sqrt(I11), math.sqrt(I22)
    sp_ = -I12 / (ns * ny)
    e_s = xs / ns
    e_perp = np.cross(en, e_s)
    out[0] = I11
    out[1] = I12
    out[2] = I22
    out[3] = xss @ en
    out[4] = db @ en
    out[5] = 0.0
    out[6] = ns
    out[7] = -sp_ * ny
    out[8] = math.sqrt(max(0.0, 1.0 - sp_ * sp_)) * ny
    out[9:12] = e_s
    out[12:15] = e_perp
    out[15:18] = en
    out[18] = np.cross(xss, xs) @ en / I11
    out[19] = np.cross(db, xs) @ en / I11


@njit(cache=True)
def _curvature_apply(g, c, sn, h, u1, u2):
    J11, J12 = g[6] * c, -g[6] * sn
    J21, J22 = g[7] * c + g[8] * sn, -g[7] * sn + g[8] * c
    A11, A12, A22 = g[0] - h * g[3], g[1] - h * g[4], g[2] - h * g[5]
    detA = A11 * A22 - A12 * A12
    detJ = J11 * J22 - J12 * J21
    j1, j2 = J11 * u1 + J12 * u2, J21 * u1 + J22 * u2
    r1 = (A22 * j1 - A12 * j2) / detA
    r2 = (-A12 * j1 + A11 * j2) / detA
    q1, q2 = g[3] * r1 + g[4] * r2, g[4] * r1 + g[5] * r2
    return r1, r2, (J22 * q1 - J12 * q2) / detJ, (-J21 * q1 + J11 * q2) / detJ


@njit(cache=True)
def wheel_loads(p, Ft1, Ft2, Ft3, w1, w2, w3, wd1, wd2, out):
    """Quasi-static wheel loads (fr, fl, rr, rl) written into ``out``."""
    m, I1, I2, I3, h = p[0], p[1], p[2], p[3], p[4]
    lf, lr, tf, tr = p[5], p[6], p[7], p[8]
    K1 = I1 * wd1 + (I3 - I2) * w2 * w3
    K2 = I2 * wd2 + (I1 - I3) * w3 * w1
    KN1 = K1 - Ft2 * h
    KN2 = K2 + Ft1 * h
    L = lf + lr
    denom = L if p[17] > 0.5 else 2.0 * L
    Nf = (Ft3 * lr - KN2) / denom
    Nr = (Ft3 * lf + KN2) / denom
    d = KN1 / (2.0 * (tf * tf + tr * tr))
    out[0] = Nf - d * tf
    out[1] = Nf + d * tf
    out[2] = Nr - d * tr
    out[3] = Nr + d * tr


@njit(cache=True)
def tire_forces(p, v1, v2, w3, delta, long_cmd, loads):
    """Summed body-frame tire forces, yaw moment and worst wheel utilisation."""
    lf, lr, tf, tr, mu = p[5], p[6], p[7], p[8], p[9]
    B, C, E, Ds = p[13], p[14], p[15], p[16]
    cd, sd = math.cos(delta), math.sin(delta)
    Fx = 0.0
    Fy = 0.0
    Mz = 0.0
    util = 0.0
    for i in range(4):
        N = loads[i]
        if N <= 0.0:
            continue
        xw = lf if i < 2 else -lr
        yw = (-tf if i == 0 else tf) if i < 2 else (-tr if i == 2 else tr)
        D = Ds * mu * N
        vx = v1 - w3 * yw
        vy = v2 + w3 * xw
        if i < 2:
            u, w = cd * vx + sd * vy, -sd * vx + cd * vy
        else:
            u, w = vx, vy
        alpha = -math.atan2(w, max(abs(u), 0.5))
        Ba = B * alpha
        shape = math.sin(C * math.atan(Ba - E * (Ba - math.atan(Ba))))
        fx = long_cmd[i] if u >= 0.0 else -long_cmd[i]
        if abs(fx) >= D:
            fx = math.copysign(D, fx)
            fy = 0.0
            used = 1.0
        else:
            r = fx / D
            fy = D * shape * math.sqrt(1.0 - r * r)
            # |(fx, fy)| / D written so rounding cannot push it past 1
            used = math.sqrt(1.0 - (1.0 - shape * shape) * (1.0 - r * r))
        if i < 2:
            fx, fy = cd * fx - sd * fy, sd * fx + cd * fy
        Fx += fx
        Fy += fy
        Mz += xw * fy - yw * fx
        util = max(util, Ds * used)
    return Fx, Fy, Mz, util


@njit(cache=True)
def derivative(x, g, p, delta, long_cmd, mem, aux, dx):
    """Fill ``dx`` with d/dt of (s, y, theta_s, v, beta, omega3) and ``aux`` with by-products.

    Wheel loads start from the tire forces and accelerations in ``mem`` and
    are refreshed once from the resulting tire forces.
    """
    m, I1, I2, I3, h, grav = p[0], p[1], p[2], p[3], p[4], p[10]
    th, v, beta, w3 = x[2], x[3], x[4], x[5]
    c, sn = math.cos(th), math.sin(th)
    cb, sb = math.cos(beta), math.sin(beta)
    v1, v2 = v * cb, v * sb
    sdot, ydot, m2, w1 = _curvature_apply(g, c, sn, h, v1, v2)
    w2 = -m2
    mg = m * grav
    Fg1 = -mg * (c * g[11] + sn * g[14])
    Fg2 = -mg * (-sn * g[11] + c * g[14])
    Fg3 = -mg * g[17]
    vsq = v * v
    Fa1 = -p[11] * vsq
    Fa3 = -p[12] * vsq
    Ft3 = m * (w1 * v2 - w2 * v1) - Fg3 - Fa3

    Ft1, Ft2, a1, a2 = mem[6], mem[7], mem[4], mem[5]
    loads = np.empty(4)
    clipped = np.empty(4)
    Fx = Fy = Mz = util = 0.0
    for _ in range(2):
        _, _, md2, wd1 = _curvature_apply(g, c, sn, h, a1, a2)
        wheel_loads(p, Ft1, Ft2, Ft3, w1, w2, w3, wd1, -md2, loads)
        for i in range(4):
            clipped[i] = max(0.0, loads[i])
        Fx, Fy, Mz, util = tire_forces(p, v1, v2, w3, delta, long_cmd, clipped)
        Ft1, Ft2 = Fx, Fy
        a1 = (Fx + Fg1 + Fa1) / m + w3 * v2
        a2 = (Fy + Fg2) / m - w3 * v1

    dx[0] = sdot
    dx[1] = ydot
    dx[2] = w3 + g[18] * sdot + g[19] * ydot
    dx[3] = cb * a1 + sb * a2
    dx[4] = (cb * a2 - sb * a1) / max(v, 0.1)
    dx[5] = (Mz - (I2 - I1) * w1 * w2) / I3
    aux[0] = sdot
    aux[1] = ydot
    aux[2] = w1
    aux[3] = w2
    aux[4] = a1
    aux[5] = a2
    aux[6] = Ft1
    aux[7] = Ft2
    aux[8] = Ft3
    aux[9] = Fx
    aux[10] = Fy
    aux[11] = clipped[0] + clipped[1] + clipped[2] + clipped[3]
    for i in range(4):
        aux[12 + i] = loads[i]
    aux[16] = util


@njit(cache=True)
def rk4_step(x, g, p, delta, long_cmd, mem, dt):
    """Classical RK4 with controls and geometry held; returns (x_new, aux of the last stage)."""
    n = x.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    a1 = np.empty(N_AUX)
    a2 = np.empty(N_AUX)
    a3 = np.empty(N_AUX)
    a4 = np.empty(N_AUX)
    derivative(x, g, p, delta, long_cmd, mem, a1, k1)
    derivative(x + 0.5 * dt * k1, g, p, delta, long_cmd, a1, a2, k2)
    derivative(x + 0.5 * dt * k2, g, p, delta, long_cmd, a2, a3, k3)
    derivative(x + dt * k3, g, p, delta, long_cmd, a3, a4, k4)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), a4

"""Compiled fixed-step RK4 kernels.

Every kernel marches backward from maturity over the cells of a
:class:`~spotforward.model.TimeGrid`, in each cell's local coordinate xi with
step ``h[i]``; ``js/jm/je`` are dt/dxi at the start, middle and end of the
cell, and cost arrays hold one-sided values at the same three stages.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def riccati_reciprocal(h, js, jm, je, cs, cm, ce, rho):
    # u = 1/P solves u' = -u - rho/c, u(T) = 1
    n = h.shape[0]
    u = np.empty(n + 1)
    u[n] = 1.0
    y = 1.0
    for i in range(n - 1, -1, -1):
        hh = h[i]
        k1 = je[i] * (-y - rho / ce[i])
        k2 = jm[i] * (-(y - 0.5 * hh * k1) - rho / cm[i])
        k3 = jm[i] * (-(y - 0.5 * hh * k2) - rho / cm[i])
        k4 = js[i] * (-(y - hh * k3) - rho / cs[i])
        y = y - hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        u[i] = y
    return u


@njit(cache=True)
def riccati_direct(h, js, jm, je, cs, cm, ce, rho):
    # P' = P (rho P / c + 1), P(T) = 1
    n = h.shape[0]
    P = np.empty(n + 1)
    P[n] = 1.0
    y = 1.0
    for i in range(n - 1, -1, -1):
        hh = h[i]
        k1 = je[i] * y * (rho * y / ce[i] + 1.0)
        y2 = y - 0.5 * hh * k1
        k2 = jm[i] * y2 * (rho * y2 / cm[i] + 1.0)
        y3 = y - 0.5 * hh * k2
        k3 = jm[i] * y3 * (rho * y3 / cm[i] + 1.0)
        y4 = y - hh * k3
        k4 = js[i] * y4 * (rho * y4 / cs[i] + 1.0)
        y = y - hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        P[i] = y
    return P


@njit(cache=True)
def _jump_rhs(y, out, J, rho, cl, cb, lam, m):
    ub, wb, ul, wl = y[0], y[1], y[2], y[3]
    r = ul / ub
    out[0] = J * (-ub - rho / cb)
    out[1] = J * (-cb * m * ub)
    out[2] = J * (-rho / cl - (1.0 + lam) * ul + lam * ul * r)
    out[3] = J * (lam * r * wl - ul * (lam * wb / ub + cl * m))


@njit(cache=True)
def jump_system(h, js, jm, je, rho, cl, cb, lam, m):
    """Stressed and normal states in reciprocal/ratio form.

    With u = 1/P and w = delta/P for each state, the stressed pair is linear
    and the normal pair only couples through u_normal/u_stress; all four are
    free of the rho/c stiffness that the raw (P, delta) system carries.
    Returns a (n+1, 4) array of (u_stress, w_stress, u_normal, w_normal).
    """
    n = h.shape[0]
    out = np.empty((n + 1, 4))
    y = np.array([1.0, 0.0, 1.0, 0.0])
    out[n] = y
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    for i in range(n - 1, -1, -1):
        hh = h[i]
        _jump_rhs(y, k1, je[i], rho, cl, cb, lam, m)
        for j in range(4):
            tmp[j] = y[j] - 0.5 * hh * k1[j]
        _jump_rhs(tmp, k2, jm[i], rho, cl, cb, lam, m)
        for j in range(4):
            tmp[j] = y[j] - 0.5 * hh * k2[j]
        _jump_rhs(tmp, k3, jm[i], rho, cl, cb, lam, m)
        for j in range(4):
            tmp[j] = y[j] - hh * k3[j]
        _jump_rhs(tmp, k4, js[i], rho, cl, cb, lam, m)
        for j in range(4):
            y[j] = y[j] - hh / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            out[i, j] = y[j]
    return out


@njit(cache=True)
def _phi_rhs(u, v, J, c, s2, rho, phi, m):
    g = phi / rho * s2
    du = J * (-rho / c - u + g * u * u)
    dv = J * (-c * m * u / rho + g * u * v)
    return du, dv


@njit(cache=True)
def riccati_phi(h, js, jm, je, cs, cm, ce, ss, sm, se, rho, phi, m, s_T):
    """Risk-averse Riccati pair in the form u = 1/P, v = Lambda/P.

    P' = P(rho P/c + 1) - (phi/rho) sigma^2 becomes
    u' = -rho/c - u + (phi/rho) sigma^2 u^2, and Lambda/P obeys
    v' = -c m u / rho + (phi/rho) sigma^2 u v with v(T) = s_T.
    """
    n = h.shape[0]
    U = np.empty(n + 1)
    V = np.empty(n + 1)
    u = 1.0
    v = s_T
    U[n] = u
    V[n] = v
    for i in range(n - 1, -1, -1):
        hh = h[i]
        a1, b1 = _phi_rhs(u, v, je[i], ce[i], se[i], rho, phi, m)
        a2, b2 = _phi_rhs(u - 0.5 * hh * a1, v - 0.5 * hh * b1, jm[i], cm[i], sm[i], rho, phi, m)
        a3, b3 = _phi_rhs(u - 0.5 * hh * a2, v - 0.5 * hh * b2, jm[i], cm[i], sm[i], rho, phi, m)
        a4, b4 = _phi_rhs(u - hh * a3, v - hh * b3, js[i], cs[i], ss[i], rho, phi, m)
        u = u - hh / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        v = v - hh / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        U[i] = u
        V[i] = v
    return U, V


@njit(cache=True)
def trapezoid_backward(dt, source, terminal):
    """mu' = mu - g on knots with the trapezoid rule, mu(T) given.

    mu_i (1 + dt/2) = mu_{i+1} (1 - dt/2) + dt/2 (g_i + g_{i+1}).
    """
    n = dt.shape[0]
    mu = np.empty(n + 1)
    mu[n] = terminal
    for i in range(n - 1, -1, -1):
        hh = dt[i]
        mu[i] = (mu[i + 1] * (1.0 - 0.5 * hh) + 0.5 * hh * (source[i] + source[i + 1])) / (1.0 + 0.5 * hh)
    return mu

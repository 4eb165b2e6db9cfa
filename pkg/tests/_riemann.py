"""Exact Riemann solver for the 1-D Euler equations of a gamma-law gas.

Standard two-wave solver (Newton on the pressure function, then wave-based
sampling).  Used as an independent oracle for the Sod benchmark; the gas in
two velocity dimensions has gamma = (d + 2) / d = 2 and pressure p = rho * T.
"""

import numpy as np


def _pressure_fn(p, rho_k, p_k, a_k, gamma):
    if p > p_k:   # shock branch
        A = 2.0 / ((gamma + 1.0) * rho_k)
        B = (gamma - 1.0) / (gamma + 1.0) * p_k
        f = (p - p_k) * np.sqrt(A / (p + B))
        df = np.sqrt(A / (p + B)) * (1.0 - 0.5 * (p - p_k) / (p + B))
    else:         # rarefaction branch
        f = 2.0 * a_k / (gamma - 1.0) * ((p / p_k) ** ((gamma - 1.0) / (2 * gamma)) - 1.0)
        df = (p / p_k) ** (-(gamma + 1.0) / (2 * gamma)) / (rho_k * a_k)
    return f, df


def solve_star(rho_l, u_l, p_l, rho_r, u_r, p_r, gamma, tol=1e-12):
    a_l = np.sqrt(gamma * p_l / rho_l)
    a_r = np.sqrt(gamma * p_r / rho_r)
    du = u_r - u_l
    p = max(0.5 * (p_l + p_r) - 0.125 * du * (rho_l + rho_r) * (a_l + a_r), 1e-8)
    for _ in range(100):
        f_l, df_l = _pressure_fn(p, rho_l, p_l, a_l, gamma)
        f_r, df_r = _pressure_fn(p, rho_r, p_r, a_r, gamma)
        dp = (f_l + f_r + du) / (df_l + df_r)
        p_new = max(p - dp, 1e-12)
        if abs(p_new - p) < tol * p:
            p = p_new
            break
        p = p_new
    f_l, _ = _pressure_fn(p, rho_l, p_l, a_l, gamma)
    f_r, _ = _pressure_fn(p, rho_r, p_r, a_r, gamma)
    u_star = 0.5 * (u_l + u_r) + 0.5 * (f_r - f_l)
    return p, u_star


def sample(xi, rho_l, u_l, p_l, rho_r, u_r, p_r, gamma):
    """Self-similar solution (rho, u, p) at xi = x / t."""
    a_l = np.sqrt(gamma * p_l / rho_l)
    a_r = np.sqrt(gamma * p_r / rho_r)
    p_s, u_s = solve_star(rho_l, u_l, p_l, rho_r, u_r, p_r, gamma)
    g1 = (gamma - 1.0) / (gamma + 1.0)

    rho = np.empty_like(xi)
    u = np.empty_like(xi)
    p = np.empty_like(xi)
    for i, x in enumerate(xi):
        if x <= u_s:   # left of contact
            if p_s > p_l:   # left shock
                s = u_l - a_l * np.sqrt(
                    (gamma + 1.0) / (2 * gamma) * p_s / p_l
                    + (gamma - 1.0) / (2 * gamma)
                )
                if x < s:
                    rho[i], u[i], p[i] = rho_l, u_l, p_l
                else:
                    rho[i] = rho_l * ((p_s / p_l + g1) / (g1 * p_s / p_l + 1.0))
                    u[i], p[i] = u_s, p_s
            else:           # left rarefaction
                head = u_l - a_l
                a_sl = a_l * (p_s / p_l) ** ((gamma - 1.0) / (2 * gamma))
                tail = u_s - a_sl
                if x < head:
                    rho[i], u[i], p[i] = rho_l, u_l, p_l
                elif x > tail:
                    rho[i] = rho_l * (p_s / p_l) ** (1.0 / gamma)
                    u[i], p[i] = u_s, p_s
                else:
                    u[i] = 2.0 / (gamma + 1.0) * (a_l + 0.5 * (gamma - 1.0) * u_l + x)
                    a = a_l - 0.5 * (gamma - 1.0) * (u[i] - u_l)
                    rho[i] = rho_l * (a / a_l) ** (2.0 / (gamma - 1.0))
                    p[i] = p_l * (a / a_l) ** (2.0 * gamma / (gamma - 1.0))
        else:          # right of contact
            if p_s > p_r:   # right shock
                s = u_r + a_r * np.sqrt(
                    (gamma + 1.0) / (2 * gamma) * p_s / p_r
                    + (gamma - 1.0) / (2 * gamma)
                )
                if x > s:
                    rho[i], u[i], p[i] = rho_r, u_r, p_r
                else:
                    rho[i] = rho_r * ((p_s / p_r + g1) / (g1 * p_s / p_r + 1.0))
                    u[i], p[i] = u_s, p_s
            else:           # right rarefaction
                head = u_r + a_r
                a_sr = a_r * (p_s / p_r) ** ((gamma - 1.0) / (2 * gamma))
                tail = u_s + a_sr
                if x > head:
                    rho[i], u[i], p[i] = rho_r, u_r, p_r
                elif x < tail:
                    rho[i] = rho_r * (p_s / p_r) ** (1.0 / gamma)
                    u[i], p[i] = u_s, p_s
                else:
                    u[i] = 2.0 / (gamma + 1.0) * (-a_r + 0.5 * (gamma - 1.0) * u_r + x)
                    a = a_r + 0.5 * (gamma - 1.0) * (u[i] - u_r)
                    rho[i] = rho_r * (a / a_r) ** (2.0 / (gamma - 1.0))
                    p[i] = p_r * (a / a_r) ** (2.0 * gamma / (gamma - 1.0))
    return rho, u, p


def wave_positions(rho_l, u_l, p_l, rho_r, u_r, p_r, gamma, t, x0=0.5):
    """Contact and right-shock positions of the Sod-type solution at time t."""
    a_r = np.sqrt(gamma * p_r / rho_r)
    p_s, u_s = solve_star(rho_l, u_l, p_l, rho_r, u_r, p_r, gamma)
    shock = u_r + a_r * np.sqrt(
        (gamma + 1.0) / (2 * gamma) * p_s / p_r + (gamma - 1.0) / (2 * gamma)
    )
    return x0 + u_s * t, x0 + shock * t

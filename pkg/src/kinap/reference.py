"""Reference solvers on the distribution itself: a resolved explicit solver,
two penalized AP solvers, and the kinetic-flux Euler limit scheme.

These serve as baselines and oracles for the micro-macro scheme.  The
distribution lives at cell centers, shape (nx, *velocity shape); ghost cells
follow the same conventions as the staggered solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .collision import safe_sqrt_m, fp_symmetric_apply, solve_fp_implicit
from .errors import StepFailureError
from .grid import SpatialGrid, VelocityGrid, maxwellian_from_moments, moments
from .micromacro import KnudsenField, flux_tables, kinetic_split_flux, moment_weighted


@dataclass
class KineticState:
    f: np.ndarray
    t: float
    eps: KnudsenField

    def copy(self) -> "KineticState":
        return KineticState(self.f.copy(), self.t, self.eps)


def pad_centers(f: np.ndarray, bc: str) -> np.ndarray:
    """Two ghost cells per side for a center-located field."""
    out = np.empty((f.shape[0] + 4,) + f.shape[1:], dtype=f.dtype)
    out[2:-2] = f
    if bc == "periodic":
        out[0] = f[-2]
        out[1] = f[-1]
        out[-2] = f[0]
        out[-1] = f[1]
    elif bc == "free-flow":
        out[0] = out[1] = f[0]
        out[-2] = out[-1] = f[-1]
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    return out


def upwind_divergence(f_ext: np.ndarray, grid: VelocityGrid, dx: float,
                      order: int = 2) -> np.ndarray:
    """Flux-form upwind divergence of v1 * f over x at cell centers.

    Order 2 reconstructs face values with minmod-limited slopes; the flux
    form telescopes, so the velocity-pointwise spatial sum is conserved under
    periodic padding.
    """
    sl = (slice(None),) + (None,) * grid.dim
    vplus = np.maximum(grid.vx, 0.0)
    vminus = np.minimum(grid.vx, 0.0)
    n = f_ext.shape[0] - 4
    if order == 1:
        left = f_ext[1:2 + n]
        right = f_ext[2:3 + n]
    elif order == 2:
        s = _accel.minmod(f_ext[2:] - f_ext[1:-1], f_ext[1:-1] - f_ext[:-2]) / dx
        left = f_ext[1:2 + n] + 0.5 * dx * s[: n + 1]
        right = f_ext[2:3 + n] - 0.5 * dx * s[1: n + 2]
    else:
        raise ValueError(f"order must be 1 or 2, got {order}")
    flux = vplus * left + vminus * right
    return (flux[1:] - flux[:-1]) / dx


def kinetic_rhs(f: np.ndarray, eps_centers: np.ndarray, kernel,
                grid: VelocityGrid, sgrid: SpatialGrid,
                order: int = 2, inv_eps_scale: float = 1.0) -> np.ndarray:
    """Right side -v1 df/dx + Q(f, f) / eps at every cell.

    ``inv_eps_scale`` multiplies the collision term (0 turns it off for
    transport-only studies).
    """
    f_ext = pad_centers(f, sgrid.bc)
    rhs = -upwind_divergence(f_ext, grid, sgrid.dx, order)
    if inv_eps_scale != 0.0:
        sl = (slice(None),) + (None,) * grid.dim
        rhs = rhs + kernel(f) * (inv_eps_scale / eps_centers[sl])
    return rhs


def rk4_step(state: KineticState, kernel, grid: VelocityGrid,
             sgrid: SpatialGrid, dt: float, order: int = 2) -> KineticState:
    """Classical four-stage Runge-Kutta step of the kinetic equation."""
    eps_c = state.eps.centers

    def rhs(f):
        return kinetic_rhs(f, eps_c, kernel, grid, sgrid, order)

    f = state.f
    stages = []
    k = rhs(f)
    stages.append(k)
    k = rhs(f + 0.5 * dt * k)
    stages.append(k)
    k = rhs(f + 0.5 * dt * k)
    stages.append(k)
    k = rhs(f + dt * k)
    stages.append(k)
    for i, s in enumerate(stages):
        if not np.all(np.isfinite(s)):
            raise StepFailureError(
                f"non-finite RK4 stage {i + 1} at t={state.t:.6g}"
            )
    f_new = f + (dt / 6.0) * (
        stages[0] + 2.0 * stages[1] + 2.0 * stages[2] + stages[3]
    )
    return KineticState(f_new, state.t + dt, state.eps)


def _bgk_penalty_weight(kernel, f, M, choice: int, delta_rel: float = 1e-8):
    """Per-cell stabilization weight for the penalized update on f."""
    if choice == 1:
        c = np.abs(kernel.loss_coefficient(f))
        return np.max(c, axis=(-2, -1))
    q = kernel(f)
    dev = np.abs(M - f)
    floor = delta_rel * np.maximum(
        np.max(dev, axis=(-2, -1), keepdims=True), 1e-300
    )
    return np.max(np.abs(q) / np.maximum(dev, floor), axis=(-2, -1))


def penalized_bgk_step(state: KineticState, kernel, grid: VelocityGrid,
                       sgrid: SpatialGrid, dt: float, order: int = 2,
                       choice: int = 1) -> KineticState:
    """Penalized update of f with the relaxation operator as stabilizer.

    The equilibrium at the new time level is built from the moments of the
    explicitly transported distribution (transport is conservative, and the
    collision term carries no moments up to the spectral leakage).
    """
    f = state.f
    sl = (slice(None),) + (None,) * grid.dim
    eps = state.eps.centers[sl]
    f_ext = pad_centers(f, sgrid.bc)
    f_star = f - dt * upwind_divergence(f_ext, grid, sgrid.dx, order)
    U_new = moments(f_star, grid)
    M_new = maxwellian_from_moments(U_new, grid)
    U_n = moments(f, grid)
    M_n = maxwellian_from_moments(U_n, grid)
    beta = _bgk_penalty_weight(kernel, f, M_n, choice)[sl]
    q = kernel(f)
    denom = eps + beta * dt
    f_new = (
        (eps / denom) * f_star
        + dt * (q - beta * (M_n - f)) / denom
        + (beta * dt / denom) * M_new
    )
    return KineticState(f_new, state.t + dt, state.eps)


def penalized_fp_step(state: KineticState, kernel, grid: VelocityGrid,
                      sgrid: SpatialGrid, dt: float, order: int = 2,
                      beta0: float = 1.0, cg_tol: float = 1e-10,
                      cg_max_iter: int = 5000) -> KineticState:
    """Penalized update of f with the linear Fokker-Planck stabilizer.

    Implicit in the symmetric FP operator built on the transported-moment
    equilibrium; one CG solve per step over all cells.
    """
    from .collision import spectral_radius_2x2

    f = state.f
    sl = (slice(None),) + (None,) * grid.dim
    eps = state.eps.centers[sl]
    f_ext = pad_centers(f, sgrid.bc)
    f_star = f - dt * upwind_divergence(f_ext, grid, sgrid.dx, order)
    U_new = moments(f_star, grid)
    sm_new = safe_sqrt_m(maxwellian_from_moments(U_new, grid))
    M_n = maxwellian_from_moments(moments(f, grid), grid)
    sm_n = safe_sqrt_m(M_n)
    d11, d12, d22 = kernel.d_a(f)
    beta = beta0 * np.max(spectral_radius_2x2(d11, d12, d22), axis=(-2, -1))
    pen_n = sm_n * fp_symmetric_apply(f / sm_n, sm_n, grid.dv)
    rhs = f_star + dt * (kernel(f) - beta[sl] * pen_n) / eps
    coef = dt * beta / state.eps.centers
    x, _ = solve_fp_implicit(
        rhs / sm_new, sm_new, coef, grid.dv, tol=cg_tol, max_iter=cg_max_iter
    )
    return KineticState(sm_new * x, state.t + dt, state.eps)


def euler_step(U: np.ndarray, grid: VelocityGrid, sgrid: SpatialGrid,
               dt: float, order: int = 2) -> np.ndarray:
    """Kinetic-flux-split update of the compressible Euler system.

    This is the vanishing-Knudsen limit of the staggered scheme's macro
    update and shares its flux evaluator.
    """
    from .micromacro import apply_bc
    from .grid import primitives

    dummy_g = np.zeros((U.shape[0] + 1, 1, 1))
    U_ext, _ = apply_bc(U, dummy_g, sgrid.bc)
    F = kinetic_split_flux(U_ext, grid, sgrid.dx, order)
    U_new = U - (dt / sgrid.dx) * (F[1:] - F[:-1])
    try:
        primitives(U_new, grid.dim)
    except Exception as exc:
        raise StepFailureError(f"inadmissible Euler state: {exc}") from exc
    return U_new


def companion_moment_step(U_me: np.ndarray, f: np.ndarray,
                          grid: VelocityGrid, sgrid: SpatialGrid,
                          dt: float) -> np.ndarray:
    """Conservative moment-system update driven by the kinetic solution.

    The moment fluxes are the upwind-split integrals of f itself (no closure
    needed); any conservative divergence keeps the spatial totals exact, so
    this companion field realizes the exactly-conserved moment accounting for
    solvers that evolve f directly.
    """
    tables = flux_tables(grid)
    f_ext = pad_centers(f, sgrid.bc)
    fp = moment_weighted(tables["plus"], f_ext, grid.dim)
    fm = moment_weighted(tables["minus"], f_ext, grid.dim)
    n_int = U_me.shape[0] + 1
    flux = fp[1:1 + n_int] + fm[2:2 + n_int]
    return U_me - (dt / sgrid.dx) * (flux[1:] - flux[:-1])

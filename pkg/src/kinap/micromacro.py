"""Micro-macro asymptotic-preserving scheme on a staggered grid.

Layout conventions:

* Macro moments ``U`` live at the ``nx`` cell centers, shape (nx, dim + 2).
* The fluctuation ``g`` lives at the ``nx + 1`` interfaces, shape
  (nx + 1, nv + 1, nv + 1).  Under periodic boundary conditions interface 0
  and interface nx coincide and carry identical values (their update stencils
  see identical neighborhoods), which keeps the telescoping conservation sum
  exact.
* Ghost data is held in extended arrays: two ghost cells per side for U
  (``U_ext[c + 2] = U[c]``) and two ghost interfaces per side for g
  (``g_ext[j + 2] = g[j]``).

The time step is Step 1 (explicit micro update of g, with the stiff
linearized collision term handled by penalization so no linear solve is
needed for the Boltzmann path) followed by Step 2 (conservative macro update
of U driven by the fresh g).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _accel
from .collision import (
    SOLVE_COUNTER,
    PenaltyParams,
    fp_symmetric_apply,
    penalty_weights_boltzmann,
    penalty_weights_landau,
    safe_sqrt_m,
    solve_fp_implicit,
)
from .errors import StepFailureError
from .grid import (
    SpatialGrid,
    VelocityGrid,
    maxwellian,
    maxwellian_from_moments,
    moments,
    primitives,
)


@dataclass
class KnudsenField:
    """Knudsen number sampled at cell centers and interfaces."""

    centers: np.ndarray
    interfaces: np.ndarray

    @classmethod
    def constant(cls, eps: float, sgrid: SpatialGrid) -> "KnudsenField":
        if eps <= 0.0:
            raise ValueError(f"epsilon must be positive, got {eps}")
        return cls(
            np.full(sgrid.nx, float(eps)),
            np.full(sgrid.nx + 1, float(eps)),
        )

    @classmethod
    def from_function(cls, fn: Callable, sgrid: SpatialGrid) -> "KnudsenField":
        c = np.asarray([fn(x) for x in sgrid.centers], dtype=float)
        i = np.asarray([fn(x) for x in sgrid.interfaces], dtype=float)
        if sgrid.bc == "periodic":
            # interface nx is interface 0: one value, or the duplicate micro
            # unknowns diverge and the telescoping conservation sum leaks
            i[-1] = i[0]
        if np.any(c <= 0.0) or np.any(i <= 0.0):
            raise ValueError("epsilon must be positive everywhere")
        return cls(c, i)


@dataclass
class MicroMacroState:
    U: np.ndarray
    g: np.ndarray
    t: float
    eps: KnudsenField

    def copy(self) -> "MicroMacroState":
        return MicroMacroState(self.U.copy(), self.g.copy(), self.t, self.eps)


def apply_bc(U: np.ndarray, g: np.ndarray, bc: str):
    """Extended arrays with two ghost cells / interfaces per side.

    Periodic uses the wrap maps U[-1] = U[nx-1], U[nx] = U[0] (and the
    interface analogue); free-flow copies the nearest interior value out.
    """
    nx = U.shape[0]
    U_ext = np.empty((nx + 4,) + U.shape[1:], dtype=U.dtype)
    g_ext = np.empty((g.shape[0] + 4,) + g.shape[1:], dtype=g.dtype)
    U_ext[2:nx + 2] = U
    g_ext[2:-2] = g
    if bc == "periodic":
        U_ext[0] = U[nx - 2]
        U_ext[1] = U[nx - 1]
        U_ext[nx + 2] = U[0]
        U_ext[nx + 3] = U[1]
        # interface j and j + nx coincide: ghost at -1 is interface nx-1, etc.
        g_ext[0] = g[-3]
        g_ext[1] = g[-2]
        g_ext[-2] = g[1]
        g_ext[-1] = g[2]
    elif bc == "free-flow":
        U_ext[0] = U_ext[1] = U[0]
        U_ext[nx + 2] = U_ext[nx + 3] = U[nx - 1]
        g_ext[0] = g_ext[1] = g[0]
        g_ext[-2] = g_ext[-1] = g[-1]
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    return U_ext, g_ext


def project(phi: np.ndarray, U: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Orthogonal projection onto the local equilibrium manifold.

    Combines the quadrature moments of phi against the Maxwellian-weighted
    basis (1, v - u, |v - u|^2 scaled) and multiplies by the Maxwellian of U.
    Fully vectorized over leading station axes shared by phi and U.
    """
    d = grid.dim
    rho, u, T = primitives(U, d)
    sl = (...,) + (None,) * d
    M = maxwellian(rho, u, T, grid)
    wdv = grid.weights * grid.cell_volume
    axes = tuple(range(-d, 0))
    c1x = grid.vx - u[..., 0][sl]
    if d == 2:
        c1y = grid.vy - u[..., 1][sl]
        e = (c1x**2 + c1y**2) / (2.0 * T[sl])
    else:
        e = c1x**2 / (2.0 * T[sl])
    m0 = np.sum(phi * wdv, axis=axes)
    m1x = np.sum(phi * c1x * wdv, axis=axes)
    me = np.sum(phi * (e - 0.5 * d) * wdv, axis=axes)
    combo = (
        m0[sl]
        + c1x * m1x[sl] / T[sl]
        + (e - 0.5 * d) * (2.0 / d) * me[sl]
    )
    if d == 2:
        m1y = np.sum(phi * c1y * wdv, axis=axes)
        combo = combo + c1y * m1y[sl] / T[sl]
    return combo * M / rho[sl]


@dataclass
class InterfaceContext:
    """Per-interface data shared by the micro update terms."""

    U_avg: np.ndarray      # averaged conserved state, for the projection
    M_half: np.ndarray     # average of the two neighboring Maxwellians
    source: np.ndarray     # v1 * (M_right - M_left) / dx, unprojected


def interface_context(U_ext: np.ndarray, grid: VelocityGrid,
                      dx: float) -> InterfaceContext:
    nxp1 = U_ext.shape[0] - 3
    U_l = U_ext[1:1 + nxp1]
    U_r = U_ext[2:2 + nxp1]
    M_l = maxwellian_from_moments(U_l, grid)
    M_r = maxwellian_from_moments(U_r, grid)
    sl = (...,) + (None,) * grid.dim
    source = grid.vx * (M_r - M_l) / dx
    return InterfaceContext(0.5 * (U_l + U_r), 0.5 * (M_l + M_r), source)


def micro_transport(g_ext: np.ndarray, grid: VelocityGrid, dx: float,
                    order: int = 2,
                    eps_ext: np.ndarray | None = None) -> np.ndarray:
    """Upwind approximation of the fluctuation transport at the interfaces.

    Order 1 is plain one-sided differencing of interface values; order 2
    builds limited cell-centered states from interface values and slopes and
    differences them (MUSCL).  The projection complement is applied by the
    caller.

    With a spatially varying Knudsen field the consistent transported
    quantity is eps * g (the deviation of the distribution itself, which
    stays continuous where eps jumps); pass the ghost-padded interface values
    as ``eps_ext`` and the stencil acts on eps * g and divides by the local
    eps.  For constant eps this reduces to plain v1 * dg/dx.
    """
    vplus = np.maximum(grid.vx, 0.0)
    vminus = np.minimum(grid.vx, 0.0)
    n_int = g_ext.shape[0] - 4
    if eps_ext is not None:
        sl = (slice(None),) + (None,) * grid.dim
        w_ext = g_ext * eps_ext[sl]
        inv = 1.0 / eps_ext[2:2 + n_int][sl]
    else:
        w_ext = g_ext
        inv = 1.0
    if order == 1:
        wc = w_ext[2:2 + n_int]
        return inv * (
            vplus * (wc - w_ext[1:1 + n_int])
            + vminus * (w_ext[3:3 + n_int] - wc)
        ) / dx
    if order != 2:
        raise ValueError(f"order must be 1 or 2, got {order}")
    slope = _accel.minmod(
        w_ext[2:] - w_ext[1:-1], w_ext[1:-1] - w_ext[:-2]
    ) / dx
    # slope[e] belongs to w_ext[e + 1]; the left interface of center c is
    # w_ext[c + 2], so centers pair consecutive slope entries.
    left = w_ext[1:-2] + 0.5 * dx * slope[:-1]
    right = w_ext[2:-1] - 0.5 * dx * slope[1:]
    G = vplus * left + vminus * right
    return inv * (G[1:] - G[:-1]) / dx


def _eps_interface_ext(eps: KnudsenField, bc: str) -> np.ndarray | None:
    """Ghost-padded interface Knudsen values, or None when constant."""
    vals = eps.interfaces
    if np.all(vals == vals[0]):
        return None
    out = np.empty(vals.shape[0] + 4)
    out[2:-2] = vals
    if bc == "periodic":
        out[0], out[1] = vals[-3], vals[-2]
        out[-2], out[-1] = vals[1], vals[2]
    else:
        out[0] = out[1] = vals[0]
        out[-2] = out[-1] = vals[-1]
    return out


@dataclass
class MicroMacroSetup:
    """Grids, collision kernel, and scheme options bundled for stepping."""

    sgrid: SpatialGrid
    vgrid: VelocityGrid
    kernel: object                      # callable h -> Q(h, h), batched
    equation: str = "boltzmann"         # boltzmann | landau | bgk
    penalty: PenaltyParams = field(default_factory=PenaltyParams)
    order_micro: int = 2
    order_macro: int = 2
    cg_tol: float = 1e-10
    cg_max_iter: int = 5000
    landau_predictor: bool = False


def flux_tables(grid: VelocityGrid):
    """Quadrature tables m(v) * w * dv^d times (v1+, v1-, v1), cached on grid."""
    cached = getattr(grid, "_flux_tables", None)
    if cached is None:
        m = grid.invariant_weights()
        wdv = grid.weights * grid.cell_volume
        vplus = np.maximum(grid.vx, 0.0)
        vminus = np.minimum(grid.vx, 0.0)
        cached = {
            "plus": m * (vplus * wdv),
            "minus": m * (vminus * wdv),
            "full": m * (grid.vx * wdv),
        }
        grid._flux_tables = cached
    return cached


def moment_weighted(table: np.ndarray, field: np.ndarray,
                    dim: int) -> np.ndarray:
    """Contract a (d+2, *vshape) table with a station field -> (ns, d+2)."""
    vaxes = [1, 2] if dim == 2 else [1]
    return np.tensordot(table, field, axes=(vaxes, vaxes)).T


def kinetic_split_flux(U_ext: np.ndarray, grid: VelocityGrid, dx: float,
                       order: int = 2) -> np.ndarray:
    """Split kinetic flux at the interfaces of a ghost-padded cell array.

    First order takes the upwind half-fluxes of the adjacent cells; second
    order adds minmod-limited slopes of the split fluxes.  With two ghost
    cells per side the result covers the nx + 1 interior interfaces.
    """
    tables = flux_tables(grid)
    M_c = maxwellian_from_moments(U_ext, grid)
    fplus = moment_weighted(tables["plus"], M_c, grid.dim)
    fminus = moment_weighted(tables["minus"], M_c, grid.dim)
    n_int = U_ext.shape[0] - 3
    if order == 1:
        return fplus[1:1 + n_int] + fminus[2:2 + n_int]
    if order != 2:
        raise ValueError(f"order must be 1 or 2, got {order}")
    sp = _accel.minmod(fplus[2:] - fplus[1:-1], fplus[1:-1] - fplus[:-2]) / dx
    sm = _accel.minmod(fminus[2:] - fminus[1:-1], fminus[1:-1] - fminus[:-2]) / dx
    # index c in sp/sm corresponds to cell U_ext[c + 1]
    return (
        fplus[1:1 + n_int] + 0.5 * dx * sp[:n_int]
        + fminus[2:2 + n_int] - 0.5 * dx * sm[1:1 + n_int]
    )


def micro_flux(g: np.ndarray, eps_interfaces: np.ndarray,
               grid: VelocityGrid) -> np.ndarray:
    """Moment flux of the fluctuation: <v1 m eps g> at each interface."""
    phi = moment_weighted(flux_tables(grid)["full"], g, grid.dim)
    return phi * eps_interfaces[:, None]


def macro_step(U: np.ndarray, g_new: np.ndarray, eps: KnudsenField,
               setup: MicroMacroSetup, dt: float) -> np.ndarray:
    """Conservative macro update driven by the updated fluctuation."""
    dx = setup.sgrid.dx
    U_ext, _ = apply_bc(U, g_new, setup.sgrid.bc)
    F = kinetic_split_flux(U_ext, setup.vgrid, dx, setup.order_macro)
    phi = micro_flux(g_new, eps.interfaces, setup.vgrid)
    return U - (dt / dx) * (F[1:] - F[:-1]) - (dt / dx) * (phi[1:] - phi[:-1])


def _projected_complement(phi, U_avg, grid):
    return phi - project(phi, U_avg, grid)


def micro_step_boltzmann(state: MicroMacroState, setup: MicroMacroSetup,
                         dt: float) -> np.ndarray:
    """Explicit penalized micro update; returns g at the next time level.

    Every term on the right is evaluated from time-n data and divided by the
    scalar per-station denominator 1 + dt (b1 + b2) / (2 eps); the penalty
    weights in the denominator are lagged to time n.
    """
    grid = setup.vgrid
    dx = setup.sgrid.dx
    U_ext, g_ext = apply_bc(state.U, state.g, setup.sgrid.bc)
    ctx = interface_context(U_ext, grid, dx)
    g_int = state.g
    eps_i = state.eps.interfaces[:, None, None]

    eps_ext = _eps_interface_ext(state.eps, setup.sgrid.bc)
    transport = micro_transport(g_ext, grid, dx, setup.order_micro, eps_ext)
    transport = _projected_complement(transport, ctx.U_avg, grid)
    source = _projected_complement(ctx.source, ctx.U_avg, grid)

    kern = setup.kernel
    mg_plus = ctx.M_half + g_int
    mg_minus = ctx.M_half - g_int
    if hasattr(kern, "micro_terms"):
        q_gg, q_plus, q_minus, loss_plus, loss_minus = kern.micro_terms(
            ctx.M_half, g_int
        )
    else:
        q_gg = kern(g_int)
        q_plus = kern(mg_plus)
        q_minus = kern(mg_minus)
        loss_plus = loss_minus = None
    lin = 0.5 * (q_plus - q_minus)
    b1, b2 = penalty_weights_boltzmann(
        kern, mg_plus, mg_minus, setup.penalty, q_plus=q_plus, q_minus=q_minus,
        loss_plus=loss_plus, loss_minus=loss_minus,
    )
    bsum = (b1 + b2)[:, None, None]

    bracket = (
        g_int
        - dt * transport
        + dt * q_gg
        + (dt / eps_i) * (lin + 0.5 * bsum * g_int - source)
    )
    return bracket / (1.0 + 0.5 * (dt / eps_i) * bsum)


def micro_step_landau(state: MicroMacroState, setup: MicroMacroSetup,
                      dt: float) -> np.ndarray:
    """Penalized micro update for the Landau path: one CG solve per step.

    The implicit symmetric Fokker-Planck penalty is inverted in the variable
    g / sqrt(M); the Maxwellian entering the implicit operator is lagged to
    time n unless ``landau_predictor`` requests a provisional macro state.
    """
    grid = setup.vgrid
    dx = setup.sgrid.dx
    U_ext, g_ext = apply_bc(state.U, state.g, setup.sgrid.bc)
    ctx = interface_context(U_ext, grid, dx)
    g_int = state.g
    eps_i = state.eps.interfaces[:, None, None]

    eps_ext = _eps_interface_ext(state.eps, setup.sgrid.bc)
    transport = micro_transport(g_ext, grid, dx, setup.order_micro, eps_ext)
    transport = _projected_complement(transport, ctx.U_avg, grid)
    source = _projected_complement(ctx.source, ctx.U_avg, grid)

    kern = setup.kernel
    q_gg = kern(g_int)
    mg_plus = ctx.M_half + g_int
    mg_minus = ctx.M_half - g_int
    lin = 0.5 * (kern(mg_plus) - kern(mg_minus))
    b1, b2 = penalty_weights_landau(kern, mg_plus, mg_minus, setup.penalty)
    bsum = (b1 + b2)[:, None, None]

    sm_n = safe_sqrt_m(ctx.M_half)
    penalty_n = sm_n * fp_symmetric_apply(g_int / sm_n, sm_n, grid.dv)

    bracket = (
        g_int
        - dt * transport
        + dt * q_gg
        + (dt / eps_i) * (lin - 0.5 * bsum * penalty_n - source)
    )

    if setup.landau_predictor:
        U_pred = macro_step(state.U, state.g, state.eps, setup, dt)
        U_pext, _ = apply_bc(U_pred, state.g, setup.sgrid.bc)
        sm_new = safe_sqrt_m(interface_context(U_pext, grid, dx).M_half)
    else:
        sm_new = sm_n

    coef = 0.5 * dt * (b1 + b2) / state.eps.interfaces
    x, _ = solve_fp_implicit(
        bracket / sm_new, sm_new, coef, grid.dv,
        tol=setup.cg_tol, max_iter=setup.cg_max_iter,
    )
    return sm_new * x


def micro_step_bgk(state: MicroMacroState, setup: MicroMacroSetup,
                   dt: float) -> np.ndarray:
    """Micro update for the relaxation model.

    The collision term reduces to -g / tau exactly (the slice M + eps g has
    the same moments as M), so the stiff part is a scalar implicit division.
    """
    grid = setup.vgrid
    dx = setup.sgrid.dx
    tau = getattr(setup.kernel, "tau", 1.0)
    U_ext, g_ext = apply_bc(state.U, state.g, setup.sgrid.bc)
    ctx = interface_context(U_ext, grid, dx)
    eps_i = state.eps.interfaces[:, None, None]
    eps_ext = _eps_interface_ext(state.eps, setup.sgrid.bc)
    transport = micro_transport(g_ext, grid, dx, setup.order_micro, eps_ext)
    transport = _projected_complement(transport, ctx.U_avg, grid)
    source = _projected_complement(ctx.source, ctx.U_avg, grid)
    bracket = state.g - dt * transport - (dt / eps_i) * source
    return bracket / (1.0 + dt / (tau * eps_i))


def micro_step(state: MicroMacroState, setup: MicroMacroSetup,
               dt: float) -> np.ndarray:
    if setup.equation == "landau":
        return micro_step_landau(state, setup, dt)
    if setup.equation == "bgk":
        return micro_step_bgk(state, setup, dt)
    return micro_step_boltzmann(state, setup, dt)


def mm_step(state: MicroMacroState, setup: MicroMacroSetup,
            dt: float) -> MicroMacroState:
    """One full micro-macro step; raises StepFailureError on bad states."""
    g_new = micro_step(state, setup, dt)
    if not np.all(np.isfinite(g_new)):
        raise StepFailureError(f"non-finite fluctuation at t={state.t:.6g}")
    U_new = macro_step(state.U, g_new, state.eps, setup, dt)
    try:
        primitives(U_new, setup.vgrid.dim)
    except Exception as exc:
        raise StepFailureError(
            f"inadmissible macro state at t={state.t + dt:.6g}: {exc}"
        ) from exc
    return MicroMacroState(U_new, g_new, state.t + dt, state.eps)


def initial_state(f0: Callable, sgrid: SpatialGrid, vgrid: VelocityGrid,
                  eps: KnudsenField) -> MicroMacroState:
    """Decompose a kinetic initial condition into macro and micro parts.

    ``f0(x, grid)`` returns the distribution at one spatial location.  The
    macro field takes the discrete moments at cell centers; the fluctuation
    at each interface is (f0 - M(moments(f0))) / eps evaluated there, which
    has zero discrete moments by construction.
    """
    U0 = np.stack([moments(f0(x, vgrid), vgrid) for x in sgrid.centers])
    g0 = np.empty((sgrid.nx + 1,) + vgrid.shape)
    for j, x in enumerate(sgrid.interfaces):
        fj = f0(x, vgrid)
        Mj = maxwellian_from_moments(moments(fj, vgrid), vgrid)
        g0[j] = (fj - Mj) / eps.interfaces[j]
    return MicroMacroState(U0, g0, 0.0, eps)


def solve_counter() -> int:
    """Number of implicit FP solves performed (structural assertions)."""
    return SOLVE_COUNTER["fp_implicit"]

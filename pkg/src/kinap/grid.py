"""Velocity and spatial grids, quadrature, moments, and Maxwellian construction.

Conventions used throughout the package:

* Velocity grids are uniform tensor lattices on ``[-lv, lv]**dim`` with
  ``nv + 1`` nodes per axis (both endpoints included), node spacing
  ``dv = 2 * lv / nv`` and trapezoid weights ``(1/2, 1, ..., 1, 1/2)``
  tensorized over the axes.  The first ``nv`` nodes per axis form the
  periodic sub-grid used by the spectral collision solvers.
* Conserved moments are stored as plain arrays with the components
  ``(rho, rho*u_1, ..., rho*u_dim, E)`` on the last axis, where
  ``E = 0.5*rho*|u|**2 + (dim/2)*rho*T``.
* Distribution fields are arrays whose trailing ``dim`` axes run over the
  velocity nodes; any leading axes index spatial stations.
"""

from __future__ import annotations


import numpy as np

from .errors import NonphysicalTemperatureError, VacuumError

RHO_FLOOR = 1e-12


class VelocityGrid:
    """Truncated uniform velocity lattice with trapezoid quadrature weights.

    Attributes
    ----------
    dim : 1 or 2
    lv : half-width of the velocity box per axis
    nv : cells per axis (the grid has ``nv + 1`` nodes per axis)
    dv : node spacing
    nodes : 1-D node coordinates, shape (nv + 1,)
    weights : tensorized trapezoid weights, shape ``(nv+1,) * dim``
    vx, vy : node coordinate arrays broadcast over the full lattice
             (``vy`` only for dim == 2)
    speed2 : ``|v|**2`` on the lattice
    """

    def __init__(self, lv: float, nv: int, dim: int = 2):
        if dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {dim}")
        if nv < 2 or nv % 2 != 0:
            raise ValueError(f"nv must be an even integer >= 2, got {nv}")
        if lv <= 0:
            raise ValueError(f"lv must be positive, got {lv}")
        self.dim = dim
        self.lv = float(lv)
        self.nv = int(nv)
        self.dv = 2.0 * self.lv / self.nv
        self.nodes = -self.lv + self.dv * np.arange(self.nv + 1)
        w1 = np.ones(self.nv + 1)
        w1[0] = w1[-1] = 0.5
        if dim == 1:
            self.weights = w1
            self.vx = self.nodes.copy()
            self.speed2 = self.nodes**2
        else:
            self.weights = np.outer(w1, w1)
            self.vx = self.nodes[:, None] * np.ones_like(self.nodes)[None, :]
            self.vy = np.ones_like(self.nodes)[:, None] * self.nodes[None, :]
            self.speed2 = self.vx**2 + self.vy**2
        self.cell_volume = self.dv**dim

    @property
    def shape(self):
        return (self.nv + 1,) * self.dim

    def invariant_weights(self):
        """Collision-invariant weight functions (1, v, |v|^2/2), stacked."""
        if self.dim == 1:
            return np.stack([np.ones_like(self.vx), self.vx, 0.5 * self.speed2])
        return np.stack(
            [np.ones_like(self.vx), self.vx, self.vy, 0.5 * self.speed2]
        )

    def __repr__(self):
        return f"VelocityGrid(lv={self.lv}, nv={self.nv}, dim={self.dim})"


class SpatialGrid:
    """Uniform 1-D cell grid on [a, b] with a boundary-condition tag.

    ``nx`` cells with centers at ``a + (i + 1/2)*dx`` and interfaces at
    ``a + i*dx`` for ``i = 0..nx``.  Interface 0 and interface nx coincide
    under periodic boundary conditions.
    """

    BCS = ("periodic", "free-flow")

    def __init__(self, nx: int, a: float, b: float, bc: str = "periodic"):
        if nx < 2:
            raise ValueError(f"nx must be >= 2, got {nx}")
        if b <= a:
            raise ValueError(f"domain must satisfy b > a, got [{a}, {b}]")
        if bc not in self.BCS:
            raise ValueError(f"bc must be one of {self.BCS}, got {bc!r}")
        self.nx = int(nx)
        self.a = float(a)
        self.b = float(b)
        self.bc = bc
        self.dx = (self.b - self.a) / self.nx
        self.centers = self.a + self.dx * (np.arange(self.nx) + 0.5)
        self.interfaces = self.a + self.dx * np.arange(self.nx + 1)

    def __repr__(self):
        return f"SpatialGrid(nx={self.nx}, [{self.a}, {self.b}], bc={self.bc!r})"


def integrate(field: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Trapezoid quadrature over velocity: sum of field * weights * dv**dim.

    The trailing ``grid.dim`` axes of ``field`` must match the grid shape;
    leading axes are preserved (one scalar per spatial station).
    """
    d = grid.dim
    if field.shape[-d:] != grid.shape:
        raise ValueError(
            f"field velocity axes {field.shape[-d:]} do not match grid {grid.shape}"
        )
    axes = tuple(range(field.ndim - d, field.ndim))
    return np.sum(field * grid.weights, axis=axes) * grid.cell_volume


def moments(f: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Conserved moments (rho, rho*u, E) of a distribution, per station."""
    d = grid.dim
    if f.shape[-d:] != grid.shape:
        raise ValueError(
            f"f velocity axes {f.shape[-d:]} do not match grid {grid.shape}"
        )
    wdv = grid.weights * grid.cell_volume
    fw = f * wdv
    axes = tuple(range(f.ndim - d, f.ndim))
    rho = fw.sum(axis=axes)
    mx = (fw * grid.vx).sum(axis=axes)
    en = 0.5 * (fw * grid.speed2).sum(axis=axes)
    if d == 1:
        return np.stack([rho, mx, en], axis=-1)
    my = (fw * grid.vy).sum(axis=axes)
    return np.stack([rho, mx, my, en], axis=-1)


def primitives(U: np.ndarray, dim: int):
    """Recover (rho, u, T) from conserved moments.

    Raises VacuumError if rho falls below the floor and
    NonphysicalTemperatureError if T <= 0, reporting the offending station.
    """
    U = np.asarray(U)
    rho = U[..., 0]
    bad = ~(rho > RHO_FLOOR)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise VacuumError(
            f"rho={np.min(rho):.3e} below floor {RHO_FLOOR:.0e} at station {tuple(idx)}"
        )
    u = U[..., 1 : 1 + dim] / rho[..., None]
    E = U[..., 1 + dim]
    T = (E - 0.5 * rho * np.sum(u * u, axis=-1)) / (0.5 * dim * rho)
    if np.any(T <= 0.0):
        idx = np.argwhere(T <= 0.0)[0]
        raise NonphysicalTemperatureError(
            f"T={np.min(T):.3e} <= 0 at station {tuple(idx)}"
        )
    return rho, u, T


def conserved(rho, u, T, dim: int) -> np.ndarray:
    """Assemble the conserved-moment vector from primitive fields."""
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != dim:
        raise ValueError(f"u must have {dim} components, got shape {u.shape}")
    T = np.asarray(T, dtype=float)
    E = 0.5 * rho * np.sum(u * u, axis=-1) + 0.5 * dim * rho * T
    return np.concatenate(
        [rho[..., None], rho[..., None] * u, E[..., None]], axis=-1
    )


def maxwellian(rho, u, T, grid: VelocityGrid) -> np.ndarray:
    """Maxwellian rho/(2 pi T)^(d/2) * exp(-|v - u|^2 / (2 T)) on the lattice.

    ``rho`` and ``T`` may be scalars or station arrays; ``u`` must carry a
    trailing axis of length ``grid.dim``.
    """
    d = grid.dim
    rho = np.asarray(rho, dtype=float)
    T = np.asarray(T, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape[-1:] != (d,):
        raise ValueError(f"u must have trailing axis {d}, got shape {u.shape}")
    if np.any(rho <= 0.0) or np.any(T <= 0.0):
        raise ValueError("maxwellian requires rho > 0 and T > 0")
    sl = (...,) + (None,) * d
    if d == 1:
        dist2 = (grid.vx - u[..., 0][sl]) ** 2
    else:
        dist2 = (grid.vx - u[..., 0][sl]) ** 2 + (grid.vy - u[..., 1][sl]) ** 2
    Ts = T[sl]
    return rho[sl] / (2.0 * np.pi * Ts) ** (d / 2.0) * np.exp(-dist2 / (2.0 * Ts))


def maxwellian_from_moments(U: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    rho, u, T = primitives(U, grid.dim)
    return maxwellian(rho, u, T, grid)


def gaussian_tail_mass(rho, u, T, grid: VelocityGrid) -> np.ndarray:
    """Analytic Maxwellian mass outside the velocity box (truncation loss)."""
    from scipy.special import erf

    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    T = np.asarray(T, dtype=float)
    inside = 1.0
    for a in range(grid.dim):
        ua = u[..., a]
        s = np.sqrt(2.0 * T)
        inside = inside * 0.5 * (
            erf((grid.lv - ua) / s) - erf((-grid.lv - ua) / s)
        )
    return rho * (1.0 - inside)

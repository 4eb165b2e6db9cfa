"""Asymptotic-preserving micro-macro solvers for collisional kinetic equations."""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    SpatialGrid,
    VelocityGrid,
    conserved,
    integrate,
    maxwellian,
    maxwellian_from_moments,
    moments,
    primitives,
)

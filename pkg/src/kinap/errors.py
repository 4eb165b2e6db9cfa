"""Exception types shared across the solver modules."""


class KinapError(Exception):
    """Base class for all solver errors."""


class ConfigError(KinapError):
    """Malformed or inconsistent scenario configuration."""


class VacuumError(KinapError):
    """Density dropped below the admissibility floor."""


class NonphysicalTemperatureError(KinapError):
    """Temperature is zero or negative at some spatial station."""


class StepFailureError(KinapError):
    """A time step produced an inadmissible or non-finite state."""


class CGConvergenceError(KinapError):
    """Conjugate gradient failed to reach the requested residual."""

    def __init__(self, residual, tol, iterations):
        self.residual = residual
        self.tol = tol
        self.iterations = iterations
        super().__init__(
            f"CG did not converge: residual {residual:.3e} > tol {tol:.3e} "
            f"after {iterations} iterations"
        )


class SolvabilityError(KinapError):
    """Elliptic solve has no solution (incompatible source on a periodic domain)."""

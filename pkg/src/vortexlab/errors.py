"""Exception hierarchy shared by all vortexlab modules."""

from __future__ import annotations


class VortexLabError(Exception):
    """Base class for every error raised by vortexlab."""


class ValidationError(VortexLabError, ValueError):
    """Initial data or configuration failed validation.

    ``violations`` holds the individual findings (see :class:`vortexlab.core.Violation`).
    """

    def __init__(self, message: str, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class DomainError(VortexLabError, ValueError):
    """A point lies outside the computational domain."""


class SingularityError(VortexLabError, ValueError):
    """A kernel was evaluated at (or numerically on top of) its singularity."""


class CollisionImminent(VortexLabError):
    """Two point vortices came closer than the integrator's separation guard."""

    def __init__(self, message: str, pair: tuple[int, int], distance: float, t: float | None = None):
        super().__init__(message)
        self.pair = pair
        self.distance = distance
        self.t = t


class StepSizeError(VortexLabError, ValueError):
    """The requested time step violates the transport CFL condition."""


class IntegrityError(VortexLabError):
    """A simulation left its admissible state (e.g. a particle exited the disk)."""


class GridError(VortexLabError, ValueError):
    """A grid is too small or otherwise unsuitable for the requested operation."""


class ConvergenceError(VortexLabError):
    """An iterative solver failed to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual

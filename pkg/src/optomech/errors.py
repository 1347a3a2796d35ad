"""Exception and warning types shared across the package.

The hierarchy distinguishes problems with the *request* (ValidationError and
its subclasses: bad parameters, incompatible shapes, impossible dimensions)
from problems encountered *while computing* (NumericalError and its
subclasses: non-convergence, invariant violations, inadequate truncation).
The command line tool maps the former to exit code 2 and the latter to 3.
"""

from __future__ import annotations

__all__ = [
    "OptomechError",
    "ValidationError",
    "DimensionError",
    "ShapeError",
    "NoSombreroError",
    "ContractViolationError",
    "NumericalError",
    "IntegrationFailure",
    "ConvergenceFailure",
    "TruncationError",
    "BoundaryLeakError",
    "TruncationWarning",
]


class OptomechError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(OptomechError):
    """Invalid user input: parameters, configuration, or incompatible objects."""


class DimensionError(ValidationError):
    """A Hilbert-space dimension is invalid for the requested operation."""


class ShapeError(ValidationError):
    """An array argument has the wrong shape, dtype, or structure."""


class NoSombreroError(ValidationError):
    """The displaced steady-state branch does not exist at these parameters.

    Raised when the pump is too weak (or the detuning too large) for the
    quadratic coupling to create a ring of displaced minima.
    """


class ContractViolationError(OptomechError):
    """An internal consistency check failed on data passed between components.

    Examples: a density matrix that is not Hermitian within tolerance, or a
    state vector with the wrong norm. Usually indicates caller error rather
    than a numerical breakdown.
    """


class NumericalError(OptomechError):
    """Base class for failures of a numerical procedure."""


class IntegrationFailure(NumericalError):
    """Time integration violated an invariant or could not control its error."""


class ConvergenceFailure(NumericalError):
    """An iterative solver stopped without reaching the requested tolerance."""


class TruncationError(NumericalError):
    """A Fock-space truncation is demonstrably too small for the result."""


class BoundaryLeakError(NumericalError):
    """A grid-based wavefunction accumulated probability at the grid edge."""


class TruncationWarning(UserWarning):
    """The requested truncation is likely marginal for the requested state."""

"""Exception types shared across the package.

Each maps to one failure family the solvers and the CLI distinguish;
the CLI turns them into exit codes (config 2, assertion 3, solver 4).
"""


class SwingStopError(Exception):
    """Base class for all package errors."""


class DomainError(SwingStopError, ValueError):
    """Numeric input outside its admissible domain (non-finite, wrong sign)."""


class ShapeError(SwingStopError, ValueError):
    """Array length inconsistent with the lattice step it claims to live on."""


class OrderingError(SwingStopError, ValueError):
    """Backward evaluation requested with source step before target step."""


class StabilityError(SwingStopError, RuntimeError):
    """One-step monotonicity condition kappa*sqrt(dt) < 1 violated."""


class ConstraintError(SwingStopError, ValueError):
    """Rights/refraction configuration incompatible with the horizon."""


class ValidationError(SwingStopError, ValueError):
    """A declared property was contradicted by a computed witness."""


class CapacityError(SwingStopError, ValueError):
    """Exhaustive enumeration requested beyond its tractable size."""


class PreconditionError(SwingStopError, ValueError):
    """Operation precondition (e.g. monotone reward) not met."""


class ConfigError(SwingStopError, ValueError):
    """Bad configuration text: unknown key, missing key, constraint breach."""


class SolverError(SwingStopError, RuntimeError):
    """Iterative solver failed to reach its tolerance within its budget."""


class CoverageError(SwingStopError, RuntimeError):
    """Quadrature nodes left the PDE grid beyond the extrapolation budget."""

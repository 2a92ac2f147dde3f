"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``UsageError`` -> 1, ``DataError`` and
subclasses -> 2, ``NumericalError`` and subclasses -> 3.
"""


class SpfomError(Exception):
    """Base class for every error raised by this package."""


class UsageError(SpfomError, ValueError):
    """Bad argument from the caller (index out of range, wrong flag)."""


class DataError(SpfomError, ValueError):
    """Input data is malformed or violates a model invariant."""


class ConfigurationError(DataError):
    """Invalid configuration or parameter combination."""


class StructuralError(DataError):
    """Dimension or shape mismatch between related objects."""


class NumericalError(SpfomError, ArithmeticError):
    """A numerical routine failed (singular basis, non-convergence)."""


class InfeasibleError(NumericalError):
    """The requested sub-problem has no feasible point."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class ConsistencyError(NumericalError):
    """An incrementally maintained cache drifted from its recomputation."""

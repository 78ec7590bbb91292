"""Exception types shared across the package."""


class PhasebalError(Exception):
    pass


class InputParseError(PhasebalError):
    """Raised when an input file cannot be parsed at all."""


class ValidationError(PhasebalError):
    """Raised when parsed data violates a model invariant.

    The message names the offending element (bus, branch, user, column).
    """


class ConvergenceError(PhasebalError):
    """Raised when an iterative solver diverges (e.g. voltage collapse)."""


class MetricError(PhasebalError):
    """Raised when a metric is undefined for its input (zero mean etc.)."""


class CapExceededError(PhasebalError):
    """Raised when an enumeration would exceed the configured cap."""


class InfeasibleProgramError(PhasebalError):
    """Raised when a binary program has contradictory constraint rows.

    ``rows`` holds labels of an irreducible infeasible row subset.
    """

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = tuple(rows)

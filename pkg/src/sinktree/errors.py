"""Exception hierarchy shared by every module in the package.

All exceptions derive from :class:`SolverError` so callers can catch one
type at the boundary. Input-validation failures additionally derive from
:class:`ValidationError`, which the CLI maps to exit status 1.
"""

from __future__ import annotations


class SolverError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SolverError):
    """Invalid input data (bad tree, bad parameters, bad tables)."""


class CycleOrDisconnected(ValidationError):
    """Edge list does not describe a single connected tree."""


class NonPositiveParameter(ValidationError):
    """An edge length or capacity is zero or negative."""


class NegativeWeight(ValidationError):
    """A vertex weight is negative."""


class NotAnEdge(SolverError):
    """The requested (u, v) pair is not an edge of the tree."""


class ParseError(ValidationError):
    """Instance text could not be parsed; carries line/column context."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f" at line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(message + where)
        self.line = line
        self.column = column


class UnsupportedContinuous(SolverError):
    """Edge-point center passed to an oracle without continuous support."""


class NoFeasiblePoint(SolverError):
    """No point on the edge (even the near-end limit) meets the threshold."""


class SinkNotInBlock(SolverError):
    """Evacuation target does not belong to the evaluated block."""


class InvalidPlan(ValidationError):
    """Evacuation plan is not an in-forest directed into the sinks."""


class RelaxedOracleRejected(SolverError):
    """A relaxed oracle was passed to a solver that requires path monotonicity."""


class SinkInSubtree(SolverError):
    """Peaking classification asked about a side that contains an open sink."""


class BudgetExceeded(SolverError):
    """Internal signal: a bounded run needs more sinks than allowed."""


class NotRCViable(SolverError):
    """Hub-tree construction attempted while a peaking edge still exists."""


class TooLarge(SolverError):
    """Instance exceeds the brute-force size cap."""

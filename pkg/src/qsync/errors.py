"""Exception types shared across the package.

Every error raised deliberately by qsync derives from ``QsyncError``, so
callers can catch one base class at an API boundary.  The subclasses split
along the lines the command line interface needs: bad input versus a
numerical routine that could not reach its advertised accuracy.
"""


class QsyncError(Exception):
    """Base class for all errors raised by qsync."""


class InvariantViolation(QsyncError, ValueError):
    """A structural rule was broken, e.g. a non-monotone quantile table."""


class DomainError(QsyncError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class DegenerateSampleError(QsyncError, ValueError):
    """A sample has too little variation (or too few points) to proceed."""


class UnsupportedDistributionError(QsyncError, TypeError):
    """The requested operation has no implementation for this distribution."""


class ModelError(QsyncError, ValueError):
    """A simulation model is configured inconsistently."""


class PrecisionError(QsyncError, ArithmeticError):
    """A numerical routine could not certify its target accuracy.

    The message carries the diagnostics (achieved error estimate, number of
    refinements) so the failure is actionable rather than silent.
    """


class ParseError(QsyncError, ValueError):
    """A data file could not be parsed; the message names file and line."""

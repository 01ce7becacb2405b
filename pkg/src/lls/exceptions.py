"""Exception hierarchy shared by the estimation pipeline."""


class LLSError(Exception):
    """Base class for all errors raised by this package."""


class SchemaMismatchError(LLSError, ValueError):
    """Raised when patterns, datasets or bases disagree about the schema."""


class PreconditionError(LLSError, ValueError):
    """Raised when an operation is called outside its domain."""


class MissingPatternError(LLSError, KeyError):
    """Raised when a moment table lacks a required pattern."""

    def __init__(self, patterns):
        self.patterns = list(patterns)
        shown = ", ".join(str(p) for p in self.patterns[:5])
        more = "" if len(self.patterns) <= 5 else f" (+{len(self.patterns) - 5} more)"
        super().__init__(f"missing frequency for pattern(s): {shown}{more}")

    def __str__(self):
        return self.args[0]


class BoundViolationError(PreconditionError):
    """Raised when a dimension bound needed for identifiability fails."""


class DegenerateMinorError(LLSError, ArithmeticError):
    """Raised when no well-conditioned minor exists for a completion step."""


class ConvergenceError(LLSError, RuntimeError):
    """Raised when an iterative fit exhausts its iteration budget."""

    def __init__(self, message, objective=None):
        super().__init__(message)
        self.objective = objective


class AffineSliceError(LLSError, ArithmeticError):
    """Raised when a span contains no vector with unit per-question sums."""


class UnobservedConditionError(LLSError, ZeroDivisionError):
    """Raised when conditioning on a pattern with zero moment."""


class UnderdeterminedError(LLSError, ArithmeticError):
    """Raised when a stacked linear system has rank below the unknown count."""


class DependencyError(LLSError, LookupError):
    """Raised when a lower-order conditional moment needed as input is unavailable."""

    def __init__(self, pattern, order, reason=""):
        self.pattern = tuple(pattern)
        self.order = tuple(order)
        msg = f"conditional moment of order {self.order} at pattern {self.pattern} unavailable"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class CoverageError(LLSError, ValueError):
    """Raised when a pattern family does not cover every observed individual."""

    def __init__(self, uncovered):
        self.uncovered = uncovered
        super().__init__(f"pattern family leaves {uncovered} individual(s) uncovered")

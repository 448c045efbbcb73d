"""Exception hierarchy shared by all modules."""


class LowRankGWError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(LowRankGWError, ValueError):
    """An input violates a documented invariant (shape, ordering, sign)."""


class PreconditionError(ValidationError):
    """A physical precondition does not hold, e.g. a non-positive gap."""


class FormatError(LowRankGWError):
    """A WFN1 file is malformed (bad magic, truncated payload, bad header)."""


class SingularMatrixError(LowRankGWError, ArithmeticError):
    """A factorisation hit a pivot below tolerance."""

    def __init__(self, message, pivot_index=None, pivot_value=None):
        super().__init__(message)
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class ConvergenceError(LowRankGWError, ArithmeticError):
    """An iteration hit its cap. ``best`` carries the last estimate, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ContourDegeneracyError(LowRankGWError, ArithmeticError):
    """Contour is unusable: bypass-flagged spec, or a node sits on a pole."""


class GuardError(LowRankGWError, MemoryError):
    """A dense materialisation would exceed its memory guard."""


class StageError(LowRankGWError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause

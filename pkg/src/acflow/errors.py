"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Config, domain, or field fails a structural precondition (CLI exit 2)."""


class NumericalAbort(RuntimeError):
    """Solver produced NaN / a linear solve failed (CLI exit 3)."""


class FrontExtinct(RuntimeError):
    """Front-tracking curve has too few nodes left to evolve."""

"""Exception hierarchy shared by all modules."""


class BornInfeldError(Exception):
    """Base class for every error raised by the package."""

    module = "borninfeld"


class ValidationError(BornInfeldError, ValueError):
    """Invalid parameters or inputs; raised before any computation."""


class ConstraintViolation(BornInfeldError):
    """A field leaves the admissible set |grad u| <= 1 (or a required margin)."""

    module = "fields"


class HypothesisError(BornInfeldError):
    """An estimate was requested on data that do not satisfy its hypotheses."""

    module = "verify"


class DivergentIntegralError(BornInfeldError):
    """A defining integral diverges for the supplied data."""

    module = "charge"


class ConvergenceError(BornInfeldError):
    """An iterative procedure failed to converge."""

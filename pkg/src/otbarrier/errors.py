"""Exception hierarchy shared by the solvers and the command line."""


class OTError(Exception):
    """Base class for every error raised by this package."""


class InputError(OTError, ValueError):
    """Malformed or invalid problem data."""


class NonPositiveMarginalError(InputError):
    """A classical marginal has a zero or negative entry."""


class SingularDensityError(InputError):
    """A quantum marginal is not positive definite."""


class DimensionError(InputError):
    """Array shapes do not agree with the declared mode dimensions."""


class SizeLimitError(InputError):
    """Problem exceeds the size supported by a reference solver."""


class DomainError(OTError):
    """A point left (or was never inside) the open dual domain."""


class ConvergenceError(OTError):
    """An iterative method exhausted its budget."""


class UnderflowError(OTError):
    """Entropic kernel underflowed to an all-zero slice."""


class DegenerateBasisError(OTError):
    """The simplex method met a numerically singular pivot."""


class KKTSolveError(OTError):
    """The bordered Newton system could not be solved."""


class BoundViolation(OTError, AssertionError):
    """A proven inequality failed numerically; signals a bug."""

"""Exception hierarchy."""


class KplsError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(KplsError, ValueError):
    """An argument is outside its admissible range."""


class BoundsError(KplsError, ValueError):
    """Data violates the boundedness requirement (|y| <= 1, k(x, x) <= 1)."""


class SizeError(KplsError, ValueError):
    """Too few observations or mismatched lengths."""


class ContextMismatchError(KplsError, ValueError):
    """Two RKHS elements from different Gram matrices were combined."""


class SingularityError(KplsError, ArithmeticError):
    """A Krylov matrix is numerically singular."""


class UndefinedBound(KplsError, ArithmeticError):
    """An error-control quantity is undefined (x <= dx in zeta)."""


class ConfigError(KplsError, ValueError):
    """Invalid run or population configuration."""

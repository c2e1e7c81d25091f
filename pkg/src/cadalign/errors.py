"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class EmptyPoolError(InputError):
    """No retrieval candidates remain after category/pool filtering."""


class IllConditionedGradientError(ArithmeticError):
    """The SVD differential is undefined (repeated or vanishing singular values)."""


class OracleError(ArithmeticError):
    """A finite-difference oracle hit a non-finite evaluation."""

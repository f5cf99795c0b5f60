"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Malformed input: bad shapes, indices, configs or files."""


class NumericalError(ArithmeticError):
    """A factorization or likelihood evaluation broke down."""

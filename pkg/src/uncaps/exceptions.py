"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A linear-algebra or fixed-point routine failed to produce a usable result."""


class OptimizationError(RuntimeError):
    """Every restart of a numerical optimisation failed."""

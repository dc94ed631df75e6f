"""Exception types shared across the library."""

__all__ = ["PreconditionError", "NumericalError"]


class PreconditionError(ValueError):
    """An input violates a documented precondition or domain restriction."""


class NumericalError(RuntimeError):
    """A computation could not reach its accuracy or convergence target."""

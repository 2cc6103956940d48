"""Exception types raised across the package."""


class FracballError(Exception):
    pass


class DomainError(FracballError, ValueError):
    """An argument lies outside the admissible parameter range."""


class QuadratureError(FracballError):
    """Adaptive quadrature did not reach the requested tolerance.

    The best available estimate and its error bound are kept on the
    exception so callers can decide whether to accept them.
    """

    def __init__(self, message, estimate=float("nan"), error=float("inf")):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class MeshMismatchError(FracballError):
    """A field or matrix refers to a different mesh than the one supplied."""


class CorruptCacheError(FracballError):
    """A matrix cache file is truncated or has a bad header."""


class InfeasibleConfigError(FracballError, ValueError):
    """The requested configuration is outside the solvable regime."""

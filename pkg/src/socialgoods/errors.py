"""Exception hierarchy shared by every module."""


class SocialGoodsError(Exception):
    """Base class for library errors."""


class DomainError(SocialGoodsError, ValueError):
    """Argument outside the domain of an operation."""


class UnsupportedError(SocialGoodsError, ValueError):
    """Model/mode/distribution combination the operation does not cover."""


class ScenarioError(DomainError):
    """Invalid scenario document or violated type invariant."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class NonConvergenceError(SocialGoodsError, RuntimeError):
    """Fixed-point iteration stopped before reaching tolerance."""

    def __init__(self, message, residual, iterations, last=None):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations
        self.last = last


class ConsistencyError(SocialGoodsError, RuntimeError):
    """An internal invariant failed; indicates a bug or a pathological input."""

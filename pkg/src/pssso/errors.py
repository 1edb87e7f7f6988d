"""Exception types shared across the toolkit."""


class PsssoError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(PsssoError):
    """Operands live in different ambient spaces."""


class InvalidSetError(PsssoError):
    """Constructor payload violates a set invariant."""


class NotOnManifoldError(PsssoError):
    """A point expected on a manifold is too far from it."""


class EmptyDomainError(PsssoError):
    """Operator evaluated outside its domain."""


class NoClosedFormError(PsssoError):
    """Requested quantity has no supported closed form."""


class ConvergenceError(PsssoError):
    """An iterative inner solve failed to reach its tolerance."""


class ConfigError(PsssoError):
    """Experiment configuration is invalid."""

"""Exception types shared across the package."""
from __future__ import annotations



class ArgumentError(ValueError):
    """Bad argument to an otherwise valid operation."""


class ValidationError(ValueError):
    """An input object violates a physical invariant (Hermiticity, trace, ...)."""


class CapacityError(ValueError):
    """A dense construction would exceed the configured dimension cap."""


class ConfigurationError(ValueError):
    """A model or experiment was configured with infeasible parameters."""


class ProtocolError(RuntimeError):
    """A measurement protocol was requested on a model that cannot support it."""


class UnsupportedModelError(RuntimeError):
    """The model does not declare what the requested propagator needs."""


class ConfigFileError(ConfigurationError):
    """A config file is malformed; ``line`` points at the offending entry when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ToleranceError(RuntimeError):
    """A numerical monitor (leakage, norm drift, time-step error) exceeded its tolerance."""

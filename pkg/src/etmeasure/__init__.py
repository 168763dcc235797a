"""Time-energy constraints on quantum measurements: models, checks and audits."""
from .errors import (
    ArgumentError, CapacityError, ConfigFileError, ConfigurationError, ProtocolError,
    ToleranceError, UnsupportedModelError, ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "CapacityError", "ConfigFileError", "ConfigurationError", "ProtocolError",
    "ToleranceError", "UnsupportedModelError", "ValidationError", "__version__",
]

"""Smooth embeddings of bounded-geometry manifold models into Euclidean space
with a tubular neighbourhood of uniform size, plus the counting obstruction for
graphs of bounded degree."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    CoverageError,
    DomainError,
    NumericError,
    PreconditionError,
    RangeError,
    ResourceError,
    TubedError,
)
from .models import model_from_descriptor, model_from_name  # noqa: E402

__all__ = [
    "__version__",
    "TubedError",
    "DomainError",
    "RangeError",
    "ResourceError",
    "PreconditionError",
    "ConfigurationError",
    "NumericError",
    "CoverageError",
    "model_from_descriptor",
    "model_from_name",
]

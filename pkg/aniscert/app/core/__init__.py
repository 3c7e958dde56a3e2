""" Certification engine

Submodules are imported directly (``from ..core.smoothing import certify``);
the data models import the exception hierarchy from here, so this package
only re-exports exceptions.
"""
from .exceptions import (
    AnisCertError, ConfigError, UnsupportedNoiseError, DimensionMismatchError,
    SingularCovarianceError, InvalidProbabilityError, EngineParameterError,
    ShapeMismatchError, ForwardNotRecordedError, CheckpointFormatError,
    MissingInputError, IdxFormatError, ResultsFormatError, VerificationFailure
)

""" Custom exceptions
"""
from typing import Optional


class AnisCertError(Exception):
    pass


class ConfigError(AnisCertError):
    """ Raised for invalid campaign configuration

    Carries the offending key and, when read from a file, its line number.
    """

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = ""
        if line is not None:
            location += f"line {line}: "
        if key is not None:
            location += f"'{key}': "
        super().__init__(f"{location}{message}")


class UnsupportedNoiseError(AnisCertError):
    pass


class DimensionMismatchError(AnisCertError):
    pass


class SingularCovarianceError(AnisCertError):
    pass


class InvalidProbabilityError(AnisCertError):
    pass


class EngineParameterError(AnisCertError):
    pass


class ShapeMismatchError(AnisCertError):
    pass


class ForwardNotRecordedError(AnisCertError):
    pass


class CheckpointFormatError(AnisCertError):
    pass


class MissingInputError(AnisCertError):
    pass


class IdxFormatError(AnisCertError):
    pass


class ResultsFormatError(AnisCertError):
    pass


class VerificationFailure(AnisCertError):
    pass

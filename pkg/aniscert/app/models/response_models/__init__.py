from .base import ResponseModel
from .response_models import (
    CertifyResponse,
    PredictResponse,
    PatternResponse
)

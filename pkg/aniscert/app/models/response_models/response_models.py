from typing import List, Optional

from .base import ResponseModel
from ..data_models import CertResult, PatternSpec, SigmaStats


class CertifyResponse(ResponseModel):
    result: CertResult


class PredictResponse(ResponseModel):
    """ predicted is None when the smoothed classifier abstains """
    predicted: Optional[int]
    sigma_stats: SigmaStats


class PatternResponse(ResponseModel):
    pattern: PatternSpec
    sigma: List[List[float]]

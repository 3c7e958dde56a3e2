from .request_models import (
    CampaignConfig, ClassifierRequest, PredictRequest, CertifyRequest
)

import logging

from fastapi import FastAPI, HTTPException
from pydantic import ValidationError

from .config import configure_logging
from .core.exceptions import AnisCertError
from .core.npg import pattern_sigma
from .models.data_models import PatternSpec, SigmaStats
from .models.request_models import CertifyRequest, PredictRequest
from .models.response_models import CertifyResponse, PatternResponse, PredictResponse
from .service import RequestCertificationService

logger = logging.getLogger(__name__)

app = FastAPI()


@app.on_event("startup")
async def startup_event():
    configure_logging()
    app.certification_service = RequestCertificationService()


@app.get("/")
async def welcome():
    return {"message": "Welcome to aniscert! I certify smoothed classifiers."}


@app.post("/certify", response_model=CertifyResponse)
def certify(request: CertifyRequest):
    """ Certify a single input under anisotropic noise

    The noise parameters are the request's sigma/mu, else its pattern, else
    isotropic.
    """
    try:
        result = app.certification_service.certify(request)
    except (AnisCertError, ValidationError) as e:
        raise HTTPException(status_code=400, detail=f"{e}")
    return CertifyResponse(result=result, status_code=200, message="success")


@app.post("/predict", response_model=PredictResponse)
def predict(request: PredictRequest):
    try:
        label, params = app.certification_service.predict(request)
    except (AnisCertError, ValidationError) as e:
        raise HTTPException(status_code=400, detail=f"{e}")
    return PredictResponse(predicted=label, sigma_stats=SigmaStats.of(params),
                           status_code=200, message="abstain" if label is None else "success")


@app.post("/pattern", response_model=PatternResponse)
def pattern(spec: PatternSpec):
    """ Evaluate a sigma pattern on its image grid """
    sigma = pattern_sigma(spec)
    return PatternResponse(pattern=spec, sigma=sigma.tolist(), status_code=200, message="success")

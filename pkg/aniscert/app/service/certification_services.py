""" Certification services

Catalog
1. CampaignCertificationService
    - certify a dataset, write the results and curve CSVs
    - PREDICT a dataset, write the predictions CSV
2. RequestCertificationService
    - certify / predict one input described by a server request
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .base_services import BaseCertificationService
from .campaign_assembly import (
    campaign_npg, classifier_handle, evaluation_split, load_dataset, output_path
)
from ..core.exceptions import ConfigError, DimensionMismatchError
from ..core.npg import pattern_sigma
from ..core.smoothing import (
    ABSTAIN, ClassifierFactory, ClassifierHandle, ExecutorClass,
    certify_with_params, evaluate_campaign, predict, predict_with_params
)
from ..data_io import write_curve, write_predictions, write_results
from ..enums import ClassifierKind
from ..models.data_models import AnisoParams, CampaignReport, CampaignSummary, CertResult
from ..models.request_models import CampaignConfig, ClassifierRequest, CertifyRequest, PredictRequest
from ..utils import derive_seed, timeit, EXAMPLE_STREAM

logger = logging.getLogger(__name__)

RESULTS_FILE = "results.csv"
CURVE_FILE = "curve.csv"
PREDICTIONS_FILE = "predictions.csv"


def empty_report() -> CampaignReport:
    return CampaignReport(results=[], curve=[], summary=CampaignSummary(
        examples=0, certified_correct=0, abstained=0, average_radius=0.0,
        average_alm=0.0, min_sigma_at_least_one=0.0))


class CampaignCertificationService(BaseCertificationService):

    def __init__(self,
                 executor_cls: ExecutorClass = ThreadPoolExecutor,
                 progress: bool = True,
                 **kwargs) -> None:
        self._executor_cls = executor_cls
        self._progress = progress

    def _engine(self, config: CampaignConfig) -> dict:
        return dict(chunk_size=config.chunk_size, workers=config.workers,
                    executor_cls=self._executor_cls)

    @timeit
    def certify(self, config: CampaignConfig, **kwargs) -> CampaignReport:
        """ Runs CERTIFY over the evaluation examples

        Writes <output>/results.csv and <output>/curve.csv; both are header-only
        when there is nothing to certify.
        """
        dataset = evaluation_split(config, load_dataset(config))
        count = len(dataset) if config.max_examples is None else min(config.max_examples, len(dataset))
        if count == 0:
            report = empty_report()
        else:
            f = classifier_handle(config, dataset)
            npg = campaign_npg(config, dataset)
            report = evaluate_campaign(dataset, f, npg, config.noise_spec(), config.norm,
                                       n0=config.n0, n=config.n, alpha=config.alpha,
                                       seed=config.seed, max_examples=count,
                                       progress=self._progress, **self._engine(config))
        write_results(report.results, output_path(config, RESULTS_FILE))
        write_curve(report.curve, output_path(config, CURVE_FILE))
        logger.info("wrote %d result rows to %s", len(report.results), config.output)
        return report

    def predict(self, config: CampaignConfig, **kwargs) -> List[Optional[int]]:
        """ Runs PREDICT over the evaluation examples; None marks an abstention """
        dataset = evaluation_split(config, load_dataset(config))
        count = len(dataset) if config.max_examples is None else min(config.max_examples, len(dataset))
        predictions: List[Optional[int]] = []
        if count:
            f = classifier_handle(config, dataset)
            npg = campaign_npg(config, dataset)
            spec = config.noise_spec()
            for index in tqdm(range(count), desc="predict", disable=not self._progress):
                label = predict(f, npg, dataset.inputs[index], spec, n=config.n, alpha=config.alpha,
                                seed=derive_seed(config.seed, EXAMPLE_STREAM, index),
                                **self._engine(config))
                predictions.append(None if label == ABSTAIN else label)
        write_predictions(predictions, dataset.labels[:count], output_path(config, PREDICTIONS_FILE))
        return predictions


class RequestCertificationService(object):
    """ Certifies single inputs sent to the server """

    def __init__(self, executor_cls: ExecutorClass = ThreadPoolExecutor, workers: int = 1,
                 **kwargs) -> None:
        self._engine = dict(workers=workers, executor_cls=executor_cls)

    @staticmethod
    def classifier(request: ClassifierRequest, d: int) -> ClassifierHandle:
        if request.kind == ClassifierKind.LINEAR:
            if request.weights is None:
                raise ConfigError("a linear classifier needs weights", key="weights")
            handle = ClassifierFactory.create(ClassifierKind.LINEAR, weights=request.weights,
                                              bias=request.bias)
        elif request.kind == ClassifierKind.LOOKUP:
            if request.table is None:
                raise ConfigError("a lookup classifier needs a table", key="table")
            handle = ClassifierFactory.create(ClassifierKind.LOOKUP, table=request.table,
                                              num_classes=request.num_classes,
                                              low=request.low, high=request.high)
        else:
            raise ConfigError("only linear and lookup classifiers can be sent over the wire",
                              key="kind")
        if handle.d != d:
            raise DimensionMismatchError(f"classifier expects dimension {handle.d}, input has {d}")
        return handle

    @staticmethod
    def params(request: PredictRequest) -> AnisoParams:
        d = len(request.x)
        if request.sigma is not None:
            mu = request.mu if request.mu is not None else np.zeros(d)
            params = AnisoParams(sigma=request.sigma, mu=mu)
        elif request.pattern is not None:
            params = AnisoParams(sigma=pattern_sigma(request.pattern).reshape(-1), mu=np.zeros(d))
        else:
            params = AnisoParams.isotropic(d)
        if params.d != d:
            raise DimensionMismatchError(f"noise parameters have dimension {params.d}, input has {d}")
        return params

    def _prepare(self, request: PredictRequest) -> Tuple[ClassifierHandle, AnisoParams, np.ndarray]:
        x = np.asarray(request.x, dtype=np.float64)
        return self.classifier(request.classifier, x.shape[0]), self.params(request), x

    def certify(self, request: CertifyRequest) -> CertResult:
        f, params, x = self._prepare(request)
        return certify_with_params(f, params, x, request.noise, request.norm, request.n0,
                                   request.n, request.alpha, request.seed, **self._engine)

    def predict(self, request: PredictRequest) -> Tuple[Optional[int], AnisoParams]:
        f, params, x = self._prepare(request)
        label = predict_with_params(f, params, x, request.noise, request.n, request.alpha,
                                    request.seed, **self._engine)
        return (None if label == ABSTAIN else label), params

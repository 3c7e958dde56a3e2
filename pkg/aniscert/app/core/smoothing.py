""" The smoothed classifier: ClassifySamples, CERTIFY, PREDICT and campaigns

Noise draws are split into fixed-size chunks, each with its own counter-based
stream (seed, stream, chunk). Tallies are integer sums over chunks, so the
result does not depend on how many workers evaluate the chunks.
"""
import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Type

import numpy as np
from tqdm import tqdm

from .cert_math import certificate
from .distributions import sample_isotropic, to_anisotropic
from .exceptions import DimensionMismatchError, EngineParameterError
from .nn_kernel import Module
from .npg import NpgModel
from .stats import lower_conf_bound, binomial_p_value
from ..config import engine_settings, curve_settings
from ..enums import BinomialAlternative, ClassifierKind, Norm, Verdict
from ..models.data_models import (
    AnisoParams,
    CampaignReport,
    CampaignSummary,
    CertResult,
    CountTally,
    CurveComparison,
    CurvePoint,
    Dataset,
    ExampleResult,
    LinearModel,
    NoiseSpec,
    ProbBounds,
    SigmaStats
)
from ..utils import (
    make_rng, derive_seed,
    SELECTION_STREAM, ESTIMATION_STREAM, PREDICTION_STREAM, EXAMPLE_STREAM
)

logger = logging.getLogger(__name__)

# to abstain, predict returns this int
ABSTAIN = -1

ExecutorClass = Type[ThreadPoolExecutor]


class ClassifierHandle(ABC):
    """ Deterministic base classifier f: R^d -> {0, ..., num_classes - 1} """
    kind: ClassifierKind

    def __init__(self, d: int, num_classes: int) -> None:
        self.d = d
        self.num_classes = num_classes

    @abstractmethod
    def classify(self, inputs: np.ndarray) -> np.ndarray:
        """ Class indices for a (m, d) batch """
        return NotImplemented

    def __call__(self, x: np.ndarray) -> int:
        return int(self.classify(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


class NnClassifier(ClassifierHandle):
    kind = ClassifierKind.NN

    def __init__(self, model: Module, d: int, num_classes: int) -> None:
        super().__init__(d, num_classes)
        self.model = model

    def classify(self, inputs):
        return np.argmax(self.model.predict(inputs), axis=1)


class LinearClassifier(ClassifierHandle):
    """ Binary halfspace (class 1 iff w^T z + b > 0) or multiclass argmax(z W^T + b) """
    kind = ClassifierKind.LINEAR

    def __init__(self, weights: Any, bias: Any = 0.0) -> None:
        weights = np.asarray(weights, dtype=np.float64)
        self.binary = weights.ndim == 1
        if self.binary:
            self.model = LinearModel(w=weights, b=float(bias))
            super().__init__(weights.shape[0], 2)
        else:
            super().__init__(weights.shape[1], weights.shape[0])
        self.weights = weights
        self.bias = np.asarray(bias, dtype=np.float64)

    @classmethod
    def from_model(cls, model: LinearModel) -> "LinearClassifier":
        return cls(model.w, model.b)

    def classify(self, inputs):
        if self.binary:
            return (inputs @ self.weights + self.bias > 0).astype(np.int64)
        return np.argmax(inputs @ self.weights.T + self.bias, axis=1)


class LookupClassifier(ClassifierHandle):
    """ Table lookup over a uniform grid of cells on [low, high]^d """
    kind = ClassifierKind.LOOKUP

    def __init__(self, table: Any, num_classes: int, low: float = 0.0, high: float = 1.0) -> None:
        table = np.asarray(table, dtype=np.int64)
        super().__init__(table.ndim, num_classes)
        self.table = table
        self.low = low
        self.high = high

    @classmethod
    def constant(cls, label: int, d: int, num_classes: int) -> "LookupClassifier":
        return cls(np.full((1,) * d, label), num_classes)

    def classify(self, inputs):
        cells = np.array(self.table.shape)
        scaled = (np.asarray(inputs) - self.low) / (self.high - self.low) * cells
        index = np.clip(np.floor(scaled).astype(np.int64), 0, cells - 1)
        return self.table[tuple(index.T)]


class ClassifierFactory(object):
    """ Handles classifier handle creation by kind """

    __classifiers__: Dict[ClassifierKind, Callable[..., ClassifierHandle]] = {
        ClassifierKind.NN: NnClassifier,
        ClassifierKind.LINEAR: LinearClassifier,
        ClassifierKind.LOOKUP: LookupClassifier,
    }

    @classmethod
    def create(cls, kind: ClassifierKind, **payload) -> ClassifierHandle:
        return cls.__classifiers__[kind](**payload)

    @classmethod
    def register(cls, kind: ClassifierKind, product: Callable[..., ClassifierHandle]) -> None:
        cls.__classifiers__[kind] = product


def _chunk_sizes(n: int, chunk_size: int) -> List[int]:
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def classify_samples(f: ClassifierHandle, x: np.ndarray, params: AnisoParams, spec: NoiseSpec,
                     n: int, seed: int, stream: int = 0,
                     chunk_size: int = engine_settings.chunk_size,
                     workers: int = engine_settings.workers,
                     executor_cls: ExecutorClass = ThreadPoolExecutor) -> CountTally:
    """ Tallies f(x + Sigma eps_k + mu) over n noise draws

    Args:
        seed: int, master seed
        stream: int, stream id; chunk c draws from make_rng(seed, stream, c)
        chunk_size: int, draws per chunk
        workers: int, concurrent chunk evaluations
    """
    if n < 1:
        raise EngineParameterError(f"need n >= 1 noise draws, got {n}")
    if chunk_size < 1:
        raise EngineParameterError(f"chunk_size must be >= 1, got {chunk_size}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != params.d:
        raise DimensionMismatchError(f"input has dimension {x.shape[0]}, parameters have {params.d}")

    def count_chunk(job):
        index, size = job
        rng = make_rng(seed, stream, index)
        eps = sample_isotropic(spec, params.d, rng, num=size)
        predictions = f.classify(x + to_anisotropic(eps, params))
        return np.bincount(predictions, minlength=f.num_classes)[:f.num_classes]

    jobs = list(enumerate(_chunk_sizes(n, chunk_size)))
    counts = np.zeros(f.num_classes, dtype=np.int64)
    if workers > 1 and len(jobs) > 1:
        with executor_cls(max_workers=workers) as executor:
            for chunk_counts in executor.map(count_chunk, jobs):
                counts += chunk_counts
    else:
        for job in jobs:
            counts += count_chunk(job)
    return CountTally(counts=counts, n=n)


def _check_engine_parameters(n0: int, n: int, alpha: float) -> None:
    if n0 < 1 or n < 1:
        raise EngineParameterError(f"need n0 >= 1 and n >= 1, got n0={n0}, n={n}")
    if not 0.0 < alpha < 1.0:
        raise EngineParameterError(f"alpha must lie in (0, 1), got {alpha}")


def certify_with_params(f: ClassifierHandle, params: AnisoParams, x: np.ndarray, spec: NoiseSpec,
                        norm: Norm, n0: int, n: int, alpha: float, seed: int,
                        **engine) -> CertResult:
    """ CERTIFY with fixed noise parameters """
    _check_engine_parameters(n0, n, alpha)
    selection = classify_samples(f, x, params, spec, n0, seed, SELECTION_STREAM, **engine)
    top_class = selection.top_class()
    estimation = classify_samples(f, x, params, spec, n, seed, ESTIMATION_STREAM, **engine)
    p_a_lower = lower_conf_bound(estimation.count(top_class), n, 1.0 - alpha)
    shared = dict(n0=n0, n=n, alpha=alpha, seed=seed, p_a_lower=p_a_lower,
                  sigma_stats=SigmaStats.of(params))
    if p_a_lower > 0.5:
        cert = certificate(spec, norm, params.d, ProbBounds(p_a_lower=p_a_lower), params)
        return CertResult(verdict=Verdict.CERTIFIED, predicted=top_class, certificate=cert, **shared)
    return CertResult(verdict=Verdict.ABSTAIN, **shared)


def certify(f: ClassifierHandle, npg: NpgModel, x: np.ndarray, spec: NoiseSpec, norm: Norm,
            n0: int = engine_settings.n0, n: int = engine_settings.n,
            alpha: float = engine_settings.alpha, seed: int = 0, **engine) -> CertResult:
    """ CERTIFY: noise parameters come from the clean x, once """
    params = npg.generate_params(x)
    return certify_with_params(f, params, x, spec, norm, n0, n, alpha, seed, **engine)


def predict_from_tally(tally: CountTally, alpha: float,
                       alternative: BinomialAlternative = BinomialAlternative.TWO_SIDED) -> int:
    top_class = tally.top_class()
    if binomial_p_value(tally.count(top_class), tally.n, 0.5, alternative) <= alpha:
        return top_class
    return ABSTAIN


def predict_with_params(f: ClassifierHandle, params: AnisoParams, x: np.ndarray, spec: NoiseSpec,
                        n: int, alpha: float, seed: int,
                        alternative: BinomialAlternative = BinomialAlternative.TWO_SIDED,
                        **engine) -> int:
    """ PREDICT with fixed noise parameters """
    _check_engine_parameters(1, n, alpha)
    tally = classify_samples(f, x, params, spec, n, seed, PREDICTION_STREAM, **engine)
    return predict_from_tally(tally, alpha, alternative)


def predict(f: ClassifierHandle, npg: NpgModel, x: np.ndarray, spec: NoiseSpec,
            n: int = engine_settings.n, alpha: float = engine_settings.alpha, seed: int = 0,
            alternative: BinomialAlternative = BinomialAlternative.TWO_SIDED, **engine) -> int:
    """ PREDICT: the top class, or ABSTAIN unless the binomial test rejects p = 1/2 """
    _check_engine_parameters(1, n, alpha)
    params = npg.generate_params(x)
    return predict_with_params(f, params, x, spec, n, alpha, seed, alternative, **engine)


class SmoothedClassifier(object):
    """ Binds a base classifier, a noise parameter generator and the noise to one engine """

    def __init__(self, classifier: ClassifierHandle, npg: NpgModel, spec: NoiseSpec,
                 norm: Norm = Norm.L2,
                 chunk_size: int = engine_settings.chunk_size,
                 workers: int = engine_settings.workers,
                 executor_cls: ExecutorClass = ThreadPoolExecutor) -> None:
        if classifier.d != npg.d:
            raise DimensionMismatchError(
                f"classifier expects dimension {classifier.d}, generator produces {npg.d}")
        self.classifier = classifier
        self.npg = npg
        self.spec = spec
        self.norm = norm
        self._engine = dict(chunk_size=chunk_size, workers=workers, executor_cls=executor_cls)

    def certify(self, x: np.ndarray, n0: int = engine_settings.n0, n: int = engine_settings.n,
                alpha: float = engine_settings.alpha, seed: int = 0) -> CertResult:
        return certify(self.classifier, self.npg, x, self.spec, self.norm, n0, n, alpha, seed,
                       **self._engine)

    def predict(self, x: np.ndarray, n: int = engine_settings.n,
                alpha: float = engine_settings.alpha, seed: int = 0,
                alternative: BinomialAlternative = BinomialAlternative.TWO_SIDED) -> int:
        return predict(self.classifier, self.npg, x, self.spec, n, alpha, seed, alternative,
                       **self._engine)


def certified_sizes(results: Sequence[ExampleResult], use_alm: bool = False) -> np.ndarray:
    """ Per-example radius (or ALM) when certified and correct, -inf otherwise """
    sizes = np.full(len(results), -np.inf)
    for index, example in enumerate(results):
        if example.certified_correct:
            sizes[index] = example.result.alm if use_alm else example.result.radius
    return sizes


def curve_thresholds(results: Sequence[ExampleResult],
                     grid_points: int = curve_settings.grid_points,
                     report_points: Iterable[float] = curve_settings.report_points) -> np.ndarray:
    """ grid_points uniform thresholds on [0, max alm] plus the report points in range """
    alms = [example.result.alm for example in results if example.result.is_certified]
    top = float(max(alms)) if alms else 0.0
    if not np.isfinite(top):
        top = max([a for a in alms if np.isfinite(a)], default=0.0)
    grid = np.linspace(0.0, top, grid_points)
    extra = [r for r in report_points if 0.0 <= r <= top]
    return np.unique(np.concatenate([grid, np.asarray(extra, dtype=np.float64)]))


def accuracy_curves(results: Sequence[ExampleResult], thresholds: Iterable[float]) -> List[CurvePoint]:
    """ Acc_radius(r) and Acc_alm(r): fraction certified, correct and at least r """
    radius_sizes = certified_sizes(results)
    alm_sizes = certified_sizes(results, use_alm=True)
    total = max(len(results), 1)
    return [CurvePoint(threshold=float(r),
                       acc_radius=float(np.sum(radius_sizes >= r)) / total,
                       acc_alm=float(np.sum(alm_sizes >= r)) / total)
            for r in thresholds]


def summarize(results: Sequence[ExampleResult]) -> CampaignSummary:
    radius_sizes = np.maximum(certified_sizes(results), 0.0)
    alm_sizes = np.maximum(certified_sizes(results, use_alm=True), 0.0)
    count = len(results)
    min_sigmas = [example.result.sigma_stats.min for example in results
                  if example.result.sigma_stats is not None]
    return CampaignSummary(
        examples=count,
        certified_correct=int(sum(example.certified_correct for example in results)),
        abstained=int(sum(not example.result.is_certified for example in results)),
        average_radius=float(radius_sizes.mean()) if count else 0.0,
        average_alm=float(alm_sizes.mean()) if count else 0.0,
        min_sigma_at_least_one=float(np.mean(np.asarray(min_sigmas) >= 1.0)) if min_sigmas else 0.0)


def evaluate_campaign(dataset: Dataset, f: ClassifierHandle, npg: NpgModel, spec: NoiseSpec,
                      norm: Norm, n0: int = engine_settings.n0, n: int = engine_settings.n,
                      alpha: float = engine_settings.alpha, seed: int = 0,
                      max_examples: Optional[int] = None, progress: bool = True,
                      **engine) -> CampaignReport:
    """ Certifies every example and builds the accuracy curves

    Example i uses the derived seed derive_seed(seed, EXAMPLE_STREAM, i).
    """
    count = len(dataset) if max_examples is None else min(max_examples, len(dataset))
    if count < 1:
        raise EngineParameterError("a certification campaign needs at least one example")

    results = []
    for index in tqdm(range(count), desc="certify", disable=not progress):
        result = certify(f, npg, dataset.inputs[index], spec, norm, n0, n, alpha,
                         derive_seed(seed, EXAMPLE_STREAM, index), **engine)
        results.append(ExampleResult(example_id=index, true_label=int(dataset.labels[index]),
                                     result=result))
    summary = summarize(results)
    logger.info("certified %d/%d correct, ACR %.4f, average ALM %.4f",
                summary.certified_correct, summary.examples,
                summary.average_radius, summary.average_alm)
    return CampaignReport(results=results,
                          curve=accuracy_curves(results, curve_thresholds(results)),
                          summary=summary)


def compare_curves(candidate: np.ndarray, baseline: np.ndarray,
                   grid_points: int = curve_settings.grid_points) -> CurveComparison:
    """ Compares two certified-accuracy curves given their per-example sizes

    The area under a certified-accuracy curve equals the mean certified size
    with failures counted as zero.
    """
    candidate = np.asarray(candidate, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    finite = np.concatenate([candidate[np.isfinite(candidate)], baseline[np.isfinite(baseline)]])
    top = float(finite.max()) if finite.size else 0.0
    thresholds = np.linspace(0.0, top, grid_points)
    candidate_acc = np.array([np.mean(candidate >= r) for r in thresholds])
    baseline_acc = np.array([np.mean(baseline >= r) for r in thresholds])
    auc_candidate = float(np.mean(np.maximum(candidate, 0.0))) if candidate.size else 0.0
    auc_baseline = float(np.mean(np.maximum(baseline, 0.0))) if baseline.size else 0.0
    if auc_baseline > 0:
        gain = (auc_candidate - auc_baseline) / auc_baseline
    else:
        gain = np.inf if auc_candidate > 0 else 0.0
    return CurveComparison(dominance_fraction=float(np.mean(candidate_acc >= baseline_acc)),
                           auc_candidate=auc_candidate, auc_baseline=auc_baseline,
                           relative_gain=float(gain))

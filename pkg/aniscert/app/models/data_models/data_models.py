import math
from typing import Optional, List, Dict, Tuple, Any

import numpy as np
from pydantic import BaseModel, Field, validator, root_validator

from ...enums import NoiseFamily, Norm, Verdict, LayerKind
from ...core.exceptions import (
    DimensionMismatchError,
    SingularCovarianceError,
    InvalidProbabilityError
)

# smallest accepted variance multiplier
SIGMA_MIN = 1e-12
# largest accepted condition number of a full covariance matrix
MAX_CONDITION_NUMBER = 1e12


def _frozen_array(value: Any, dtype=np.float64) -> np.ndarray:
    array = np.array(value, dtype=dtype)
    array.setflags(write=False)
    return array


class DataModel(BaseModel):
    pass


class ArrayModel(DataModel):
    """ Base for models that carry numpy arrays """

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False


class NoiseSpec(DataModel):
    """ Isotropic base noise: family and scalar scale lambda

    Fields:
        family: NoiseFamily
        scale: float (alias "lambda")
        power_exponent: Optional[float], the power-law exponent a
    """
    family: NoiseFamily
    scale: float = Field(..., alias="lambda")
    power_exponent: Optional[float] = None

    class Config:
        allow_population_by_field_name = True
        allow_mutation = False

    @validator("scale")
    def positive_scale(cls, value):
        if not (value > 0 and math.isfinite(value)):
            raise ValueError("lambda must be a positive finite real")
        return value

    @validator("power_exponent")
    def positive_exponent(cls, value):
        if value is not None and not value > 0:
            raise ValueError("power exponent must be positive")
        return value

    @root_validator(skip_on_failure=True)
    def exponent_iff_power_law(cls, values):
        is_power_law = values["family"] == NoiseFamily.POWER_LAW_LINF
        has_exponent = values.get("power_exponent") is not None
        if is_power_law != has_exponent:
            raise ValueError("power_exponent is required for, and only for, power_law_linf")
        return values


class AnisoParams(ArrayModel):
    """ Anisotropic noise parameters

    The noise is eps' = Sigma eps + mu, with Sigma = diag(sigma) unless a full
    matrix is given.

    Fields:
        sigma: np.ndarray (d,), strictly positive variance multipliers
        mu: np.ndarray (d,), mean offsets
        full_sigma: Optional[np.ndarray] (d, d), invertible
    """
    sigma: np.ndarray
    mu: np.ndarray
    full_sigma: Optional[np.ndarray] = None

    @validator("sigma", pre=True)
    def positive_sigma(cls, value):
        sigma = _frozen_array(value).reshape(-1)
        if sigma.size == 0:
            raise ValueError("sigma must not be empty")
        if not np.all(np.isfinite(sigma)) or np.any(sigma < SIGMA_MIN):
            raise ValueError(f"every sigma must be finite and >= {SIGMA_MIN}")
        return sigma

    @validator("mu", pre=True)
    def finite_mu(cls, value):
        mu = _frozen_array(value).reshape(-1)
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must be finite")
        return mu

    @validator("full_sigma", pre=True)
    def square_matrix(cls, value):
        if value is None:
            return None
        matrix = _frozen_array(value)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("full_sigma must be a square matrix")
        return matrix

    @root_validator(skip_on_failure=True)
    def consistent_dimensions(cls, values):
        d = values["sigma"].size
        if values["mu"].size != d:
            raise DimensionMismatchError(
                f"mu has {values['mu'].size} entries, sigma has {d}")
        matrix = values.get("full_sigma")
        if matrix is not None:
            if matrix.shape[0] != d:
                raise DimensionMismatchError(
                    f"full_sigma is {matrix.shape[0]}x{matrix.shape[1]}, expected {d}x{d}")
            condition = np.linalg.cond(matrix)
            if not np.isfinite(condition) or condition > MAX_CONDITION_NUMBER:
                raise SingularCovarianceError(
                    f"full_sigma condition number {condition:.3e} exceeds {MAX_CONDITION_NUMBER:.0e}")
        return values

    @classmethod
    def isotropic(cls, d: int) -> "AnisoParams":
        return cls(sigma=np.ones(d), mu=np.zeros(d))

    @classmethod
    def from_matrix(cls, full_sigma: Any, mu: Any = None) -> "AnisoParams":
        """ Builds general anisotropic parameters; sigma holds the row norms of Sigma """
        matrix = np.array(full_sigma, dtype=np.float64)
        d = matrix.shape[0]
        row_norms = np.maximum(np.linalg.norm(matrix, axis=1), SIGMA_MIN)
        return cls(sigma=row_norms,
                   mu=np.zeros(d) if mu is None else mu,
                   full_sigma=matrix)

    @property
    def d(self) -> int:
        return int(self.sigma.size)

    @property
    def is_diagonal(self) -> bool:
        return self.full_sigma is None

    def matrix(self) -> np.ndarray:
        if self.full_sigma is not None:
            return self.full_sigma
        return np.diag(self.sigma)

    def regularized(self, ridge: float) -> "AnisoParams":
        """ Adds ridge * I to a full covariance (the usual remedy for a near-singular Sigma) """
        if self.full_sigma is None:
            return self
        return AnisoParams.from_matrix(self.full_sigma + ridge * np.eye(self.d), self.mu)

    def log_scale_volume(self) -> float:
        """ log |det Sigma|, i.e. sum(log sigma) in the diagonal case """
        if self.full_sigma is None:
            return float(np.sum(np.log(self.sigma)))
        _, logdet = np.linalg.slogdet(self.full_sigma)
        return float(logdet)

    def geometric_scale(self) -> float:
        """ |det Sigma|^(1/d), computed in log space """
        if self.full_sigma is None and np.all(self.sigma == self.sigma[0]):
            return float(self.sigma[0])
        return float(math.exp(self.log_scale_volume() / self.d))

    def min_scale(self, norm: Norm = Norm.L2) -> float:
        """ Largest s with {|delta|_p <= s R} inside {|Sigma^-1 delta|_p <= R}

        For diagonal Sigma this is min(sigma) for every norm.
        """
        if self.full_sigma is None:
            return float(np.min(self.sigma))
        inverse_norm = np.linalg.norm(np.linalg.inv(self.full_sigma), ord=norm.numpy_ord)
        return float(1.0 / inverse_norm)


class ProbBounds(DataModel):
    """ Lower bound on the top class probability and optional upper bound on the runner-up

    The binary reduction p_b_upper = 1 - p_a_lower is used when p_b_upper is None.
    """
    p_a_lower: float
    p_b_upper: Optional[float] = None

    @validator("p_a_lower", "p_b_upper")
    def unit_interval(cls, value):
        if value is not None and not 0.0 <= value <= 1.0:
            raise InvalidProbabilityError(f"probability bound {value} outside [0, 1]")
        return value

    @root_validator(skip_on_failure=True)
    def ordered(cls, values):
        p_b = values.get("p_b_upper")
        if p_b is not None and p_b > values["p_a_lower"]:
            raise InvalidProbabilityError(
                f"p_b_upper={p_b} exceeds p_a_lower={values['p_a_lower']}")
        return values

    @property
    def runner_up(self) -> float:
        return 1.0 - self.p_a_lower if self.p_b_upper is None else self.p_b_upper


class Certificate(DataModel):
    """ Certified radius (min sigma * R), ALM (geometric mean sigma * R) and the isotropic R """
    radius: float
    alm: float
    base_radius: float
    norm: Norm

    @validator("radius", "alm", "base_radius")
    def nonnegative(cls, value):
        if not value >= 0:
            raise ValueError("certificate sizes must be nonnegative")
        return value

    @root_validator(skip_on_failure=True)
    def alm_dominates_radius(cls, values):
        if values["alm"] < values["radius"] * (1.0 - 1e-12):
            raise ValueError("alm must be >= radius")
        return values


class MeasureResult(DataModel):
    measure: float
    log_measure: float


class CountTally(ArrayModel):
    """ Per-class tallies of base-classifier predictions under noise """
    counts: np.ndarray
    n: int

    @validator("counts", pre=True)
    def integer_counts(cls, value):
        counts = _frozen_array(value, dtype=np.int64).reshape(-1)
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        return counts

    @root_validator(skip_on_failure=True)
    def counts_sum_to_n(cls, values):
        if values["n"] < 1:
            raise ValueError("n must be >= 1")
        if int(values["counts"].sum()) != values["n"]:
            raise ValueError("counts must sum to n")
        return values

    def top_class(self) -> int:
        # argmax returns the lowest index among ties
        return int(np.argmax(self.counts))

    def count(self, label: int) -> int:
        return int(self.counts[label])


class SigmaStats(DataModel):
    min: float
    mean: float
    max: float
    geometric_mean: float

    @classmethod
    def of(cls, params: AnisoParams) -> "SigmaStats":
        return cls(min=float(params.sigma.min()),
                   mean=float(params.sigma.mean()),
                   max=float(params.sigma.max()),
                   geometric_mean=params.geometric_scale())


class CertResult(DataModel):
    """ Outcome of a certification

    Fields:
        verdict: Verdict
        predicted: Optional[int], the certified class
        p_a_lower: Optional[float], the lower confidence bound on the top class
        certificate: Optional[Certificate]
        n0, n: Monte-Carlo sample counts
        alpha: float
        seed: Optional[int]
        sigma_stats: Optional[SigmaStats]
    """
    verdict: Verdict
    predicted: Optional[int] = None
    p_a_lower: Optional[float] = None
    certificate: Optional[Certificate] = None
    n0: int
    n: int
    alpha: float
    seed: Optional[int] = None
    sigma_stats: Optional[SigmaStats] = None

    @root_validator(skip_on_failure=True)
    def verdict_fields(cls, values):
        if values["verdict"] == Verdict.CERTIFIED:
            if values.get("predicted") is None or values.get("certificate") is None:
                raise ValueError("a certified result needs a class and a certificate")
            if values.get("p_a_lower") is None or not values["p_a_lower"] > 0.5:
                raise ValueError("a certified result needs p_a_lower > 1/2")
        elif values.get("certificate") is not None or values.get("predicted") is not None:
            raise ValueError("an abstained result carries no class or certificate")
        return values

    @property
    def is_certified(self) -> bool:
        return self.verdict == Verdict.CERTIFIED

    @property
    def radius(self) -> Optional[float]:
        return self.certificate.radius if self.certificate else None

    @property
    def alm(self) -> Optional[float]:
        return self.certificate.alm if self.certificate else None


class ExampleResult(DataModel):
    """ A certification result attached to a labelled example """
    example_id: int
    true_label: int
    result: CertResult

    @property
    def certified_correct(self) -> bool:
        return self.result.is_certified and self.result.predicted == self.true_label


class Dataset(ArrayModel):
    """ Labelled inputs in [0, 1]^d

    Fields:
        inputs: np.ndarray (N, d)
        labels: np.ndarray (N,)
        num_classes: int
        image_shape: Optional[Tuple[int, int]]
    """
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    image_shape: Optional[Tuple[int, int]] = None

    @validator("inputs", pre=True)
    def unit_cube(cls, value):
        inputs = _frozen_array(value)
        if inputs.ndim != 2:
            raise ValueError("inputs must be a (N, d) array")
        if inputs.size and (inputs.min() < 0.0 or inputs.max() > 1.0):
            raise ValueError("inputs must lie in [0, 1]")
        return inputs

    @validator("labels", pre=True)
    def integer_labels(cls, value):
        return _frozen_array(value, dtype=np.int64).reshape(-1)

    @root_validator(skip_on_failure=True)
    def consistent(cls, values):
        inputs, labels = values["inputs"], values["labels"]
        if inputs.shape[0] != labels.shape[0]:
            raise ValueError("inputs and labels differ in length")
        if labels.size and (labels.min() < 0 or labels.max() >= values["num_classes"]):
            raise ValueError("labels must lie in [0, num_classes)")
        shape = values.get("image_shape")
        if shape is not None and shape[0] * shape[1] != inputs.shape[1]:
            raise ValueError("image_shape does not match the input dimension")
        return values

    @property
    def d(self) -> int:
        return int(self.inputs.shape[1])

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def subset(self, indices: Any) -> "Dataset":
        return Dataset(inputs=self.inputs[indices], labels=self.labels[indices],
                       num_classes=self.num_classes, image_shape=self.image_shape)


class LinearModel(ArrayModel):
    """ Halfspace w^T z + b > 0, the verification vehicle for linear smoothing """
    w: np.ndarray
    b: float = 0.0

    @validator("w", pre=True)
    def nonzero_weights(cls, value):
        w = _frozen_array(value).reshape(-1)
        if not np.linalg.norm(w) > 0:
            raise ValueError("weight vector must be nonzero")
        return w


class PatternSpec(DataModel):
    """ Closed-form spatial variance pattern sigma(a, b) = kappa * |(a, b)|_p^2 + iota

    Fields:
        norm_p: Norm
        kappa: float >= 0
        iota: float > 0, the variance of the center pixel
        height, width: int
        target_mean: Optional[float], rescales the map to this mean
    """
    norm_p: Norm = Norm.L2
    kappa: float = 1.0
    iota: float = 1.0
    height: int
    width: int
    target_mean: Optional[float] = None

    @validator("kappa")
    def nonnegative_kappa(cls, value):
        if not value >= 0:
            raise ValueError("kappa must be >= 0")
        return value

    @validator("iota")
    def positive_iota(cls, value):
        if not value > 0:
            raise ValueError("iota must be > 0")
        return value

    @validator("height", "width")
    def positive_size(cls, value):
        if value < 1:
            raise ValueError("pattern size must be >= 1")
        return value

    @validator("target_mean")
    def positive_target(cls, value):
        if value is not None and not value > 0:
            raise ValueError("target_mean must be > 0")
        return value


class LayerSpec(DataModel):
    """ Describes one layer of an nn-kernel model

    Fields:
        kind: LayerKind
        params: kind-specific sizes (in_features/out_features, in_channels/out_channels/kernel_size)
        gamma: Optional[float], amplification of AMPLIFIED_TANH
    """
    kind: LayerKind
    params: Dict[str, int] = {}
    gamma: Optional[float] = None

    @root_validator(skip_on_failure=True)
    def gamma_for_amplified_tanh(cls, values):
        if values["kind"] == LayerKind.AMPLIFIED_TANH:
            gamma = values.get("gamma")
            if gamma is None or not gamma > 0:
                raise ValueError("amplified tanh needs gamma > 0")
        return values


class CurvePoint(DataModel):
    threshold: float
    acc_radius: float
    acc_alm: float


class CampaignSummary(DataModel):
    """ Aggregate metrics of a certification campaign

    average_radius and average_alm count failures as zero (the usual ACR).
    """
    examples: int
    certified_correct: int
    abstained: int
    average_radius: float
    average_alm: float
    min_sigma_at_least_one: float


class CampaignReport(DataModel):
    results: List[ExampleResult]
    curve: List[CurvePoint]
    summary: CampaignSummary


class CurveComparison(DataModel):
    dominance_fraction: float
    auc_candidate: float
    auc_baseline: float
    relative_gain: float


class VolumeEstimate(DataModel):
    volume: float
    standard_error: float
    samples: int


class CheckReport(DataModel):
    """ One verification check

    Fields:
        name: str
        passed: bool
        detail: str
        seconds: float
        standard_error: Optional[float]
    """
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0
    standard_error: Optional[float] = None


class TrainingSummary(DataModel):
    epochs: int
    steps: int
    clean_accuracy: float
    mean_sigma: float
    min_sigma: float
    initial_mean_sigma: float
    initial_min_sigma: float
    final_loss: float

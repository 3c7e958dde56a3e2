""" Certified radii, ALM and the geometry of the certified region

All radius formulas are the binary-case isotropic radii R(p_a_lower); the
anisotropic certificate scales R by min(sigma) (radius) and by the geometric
mean of sigma (ALM).
"""
import logging
import math
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.special import erfc

from .exceptions import (
    UnsupportedNoiseError,
    InvalidProbabilityError,
    DimensionMismatchError,
    SingularCovarianceError,
    EngineParameterError
)
from ..enums import NoiseFamily, Norm
from ..models.data_models import (
    NoiseSpec,
    AnisoParams,
    ProbBounds,
    Certificate,
    MeasureResult
)

logger = logging.getLogger(__name__)

# largest dimension for which a full covariance region test is supported
MAX_FULL_SIGMA_DIM = 8

_ACKLAM_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACKLAM_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
             6.680131188771972e+01, -1.328068155288572e+01)
_ACKLAM_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACKLAM_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
             3.754408661907416e+00)
_ACKLAM_SPLIT = 0.02425

_LANCZOS_G = 7
_LANCZOS_COEFFICIENTS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)

Number = Union[float, np.ndarray]


def standard_normal_cdf(x: Number) -> Number:
    value = 0.5 * erfc(-np.asarray(x, dtype=np.float64) / math.sqrt(2.0))
    return float(value) if np.ndim(x) == 0 else value


def _polynomial(coefficients, x):
    result = 0.0
    for c in coefficients:
        result = result * x + c
    return result


def inverse_normal_cdf(p: Number) -> Number:
    """ Standard normal quantile

    Acklam's rational approximation followed by one Newton step against the
    erfc-based cdf, giving |Phi(x) - p| well below 1e-12.

    Args:
        p: float or array with entries in (0, 1)
    """
    p_arr = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if np.any(~(p_arr > 0.0)) or np.any(~(p_arr < 1.0)):
        raise InvalidProbabilityError("inverse normal cdf needs p in (0, 1)")

    lower = p_arr < _ACKLAM_SPLIT
    upper = p_arr > 1.0 - _ACKLAM_SPLIT
    central = ~(lower | upper)

    x = np.empty_like(p_arr)
    if np.any(central):
        q = p_arr[central] - 0.5
        r = q * q
        x[central] = q * _polynomial(_ACKLAM_A, r) / (_polynomial(_ACKLAM_B, r) * r + 1.0)
    if np.any(lower):
        q = np.sqrt(-2.0 * np.log(p_arr[lower]))
        x[lower] = _polynomial(_ACKLAM_C, q) / (_polynomial(_ACKLAM_D, q) * q + 1.0)
    if np.any(upper):
        q = np.sqrt(-2.0 * np.log1p(-p_arr[upper]))
        x[upper] = -_polynomial(_ACKLAM_C, q) / (_polynomial(_ACKLAM_D, q) * q + 1.0)

    # Newton step; in the upper tail Phi(x) - p is formed from the complements
    density = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    residual = np.where(upper,
                        (1.0 - p_arr) - 0.5 * erfc(x / math.sqrt(2.0)),
                        standard_normal_cdf(x) - p_arr)
    x = x - residual / density

    if np.ndim(p) == 0:
        return float(x[0])
    return x


def _quantile(p: float) -> float:
    """ Normal quantile extended to the closed interval """
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    return inverse_normal_cdf(p)


def log_gamma(beta: float) -> float:
    """ log|Gamma(beta)| by the Lanczos approximation (g=7, 9 terms) """
    if not beta > 0:
        raise EngineParameterError(f"gamma needs beta > 0, got {beta}")
    if beta < 0.5:
        return math.log(math.pi / abs(math.sin(math.pi * beta))) - log_gamma(1.0 - beta)
    z = beta - 1.0
    series = _LANCZOS_COEFFICIENTS[0]
    for i in range(1, len(_LANCZOS_COEFFICIENTS)):
        series += _LANCZOS_COEFFICIENTS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_TWO_PI + (z + 0.5) * math.log(t) - t + math.log(series)


def gamma_function(beta: float) -> float:
    """ Gamma(beta) for beta > 0

    Small arguments use the reflection formula, large ones go through
    log_gamma to stay clear of overflow in t^(z + 1/2).
    """
    if not beta > 0:
        raise EngineParameterError(f"gamma needs beta > 0, got {beta}")
    if beta < 0.5:
        return math.pi / (math.sin(math.pi * beta) * gamma_function(1.0 - beta))
    if beta >= 20.0:
        return math.exp(log_gamma(beta))
    z = beta - 1.0
    series = _LANCZOS_COEFFICIENTS[0]
    for i in range(1, len(_LANCZOS_COEFFICIENTS)):
        series += _LANCZOS_COEFFICIENTS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * series


# Binary-case isotropic radii, keyed by (family, norm).
# Each takes (p_a_lower, lambda, d, a) with p_a_lower in [1/2, 1].
RadiusFormula = Callable[[float, float, int, Optional[float]], float]

RADIUS_FORMULAS: Dict[Tuple[NoiseFamily, Norm], RadiusFormula] = {
    (NoiseFamily.GAUSSIAN, Norm.L2): lambda p, lam, d, a: lam * _quantile(p),
    (NoiseFamily.GAUSSIAN, Norm.L1): lambda p, lam, d, a: lam * _quantile(p),
    (NoiseFamily.GAUSSIAN, Norm.LINF): lambda p, lam, d, a: lam * _quantile(p) / math.sqrt(d),
    (NoiseFamily.LAPLACE, Norm.L1):
        lambda p, lam, d, a: math.inf if p >= 1.0 else -lam * math.log(2.0 * (1.0 - p)),
    (NoiseFamily.EXP_LINF, Norm.L1): lambda p, lam, d, a: 2.0 * d * lam * (p - 0.5),
    (NoiseFamily.EXP_LINF, Norm.LINF):
        lambda p, lam, d, a: math.inf if p >= 1.0 else lam * math.log(1.0 / (2.0 * (1.0 - p))),
    (NoiseFamily.UNIFORM_LINF, Norm.L1): lambda p, lam, d, a: 2.0 * lam * (p - 0.5),
    (NoiseFamily.UNIFORM_LINF, Norm.LINF):
        lambda p, lam, d, a: 2.0 * lam * (1.0 - (1.5 - p) ** (1.0 / d)),
    (NoiseFamily.POWER_LAW_LINF, Norm.L1):
        lambda p, lam, d, a: 2.0 * d * lam / (a - d) * (p - 0.5),
}


def radius_binary(spec: NoiseSpec, norm: Norm, d: int, p_a_lower: float) -> Optional[float]:
    """ Isotropic binary-case certified radius

    Returns:
        None when p_a_lower < 1/2 (not certifiable), otherwise R >= 0.
    """
    formula = RADIUS_FORMULAS.get((spec.family, norm))
    if formula is None:
        raise UnsupportedNoiseError(
            f"no certified radius for {spec.family.value} noise under {norm.value}")
    if d < 1:
        raise DimensionMismatchError(f"dimension must be >= 1, got {d}")
    if spec.family == NoiseFamily.POWER_LAW_LINF and not spec.power_exponent > d:
        raise UnsupportedNoiseError(
            f"power-law radius needs a > d, got a={spec.power_exponent}, d={d}")
    if not 0.0 <= p_a_lower <= 1.0:
        raise InvalidProbabilityError(f"p_a_lower={p_a_lower} outside [0, 1]")
    if p_a_lower < 0.5:
        return None
    # max() also turns -0.0 into 0.0
    return max(0.0, formula(p_a_lower, spec.scale, d, spec.power_exponent))


def radius_gaussian_multiclass(lam: float, p_bounds: ProbBounds) -> float:
    """ R = lambda / 2 * (Phi^-1(p_a_lower) - Phi^-1(p_b_upper)), clamped at 0 """
    p_a, p_b = p_bounds.p_a_lower, p_bounds.runner_up
    if p_a <= p_b:
        return 0.0
    return max(0.0, 0.5 * lam * (_quantile(p_a) - _quantile(p_b)))


def certificate(spec: NoiseSpec, norm: Norm, d: int, p_bounds: ProbBounds,
                params: AnisoParams) -> Optional[Certificate]:
    """ Anisotropic certificate from (anisotropic) probability bounds

    The binary formula is used when p_b_upper is absent; Gaussian noise with a
    runner-up bound uses the multiclass form. Non-Gaussian families only have
    binary forms, so their runner-up bound is ignored.

    Returns:
        None when the bounds are not certifiable.
    """
    if params.d != d:
        raise DimensionMismatchError(f"parameters have dimension {params.d}, expected {d}")

    if p_bounds.p_b_upper is not None and spec.family == NoiseFamily.GAUSSIAN:
        if (spec.family, norm) not in RADIUS_FORMULAS:
            raise UnsupportedNoiseError(f"no certified radius for gaussian noise under {norm.value}")
        base_radius = radius_gaussian_multiclass(spec.scale, p_bounds)
        if norm == Norm.LINF:
            base_radius /= math.sqrt(d)
    else:
        if p_bounds.p_b_upper is not None:
            logger.debug("runner-up bound ignored for %s noise", spec.family.value)
        base_radius = radius_binary(spec, norm, d, p_bounds.p_a_lower)
        if base_radius is None:
            return None

    return Certificate(radius=params.min_scale(norm) * base_radius,
                       alm=params.geometric_scale() * base_radius,
                       base_radius=base_radius,
                       norm=norm)


def region_norm(delta: np.ndarray, params: AnisoParams, norm: Norm) -> np.ndarray:
    """ |Sigma^-1 delta|_p over the last axis """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape[-1] != params.d:
        raise DimensionMismatchError(
            f"perturbation has dimension {delta.shape[-1]}, parameters have {params.d}")
    if params.is_diagonal:
        scaled = delta / params.sigma
    else:
        if params.d > MAX_FULL_SIGMA_DIM:
            raise DimensionMismatchError(
                f"full covariance regions are limited to d <= {MAX_FULL_SIGMA_DIM}")
        try:
            scaled = np.linalg.solve(params.full_sigma, delta.reshape(-1, params.d).T).T
        except np.linalg.LinAlgError as e:
            raise SingularCovarianceError(f"{e}")
        scaled = scaled.reshape(delta.shape)
    return np.linalg.norm(scaled, ord=norm.numpy_ord, axis=-1)


def in_certified_region(delta: np.ndarray, params: AnisoParams, norm: Norm,
                        base_radius: float) -> bool:
    return bool(region_norm(delta, params, norm) <= base_radius)


def _log_unit_ball_constant(norm_p: float, d: int) -> float:
    """ log of (2 Gamma(1 + 1/p))^d / Gamma(1 + d/p); zero-width limit for p = inf """
    if math.isinf(norm_p):
        return d * math.log(2.0)
    return d * (math.log(2.0) + log_gamma(1.0 + 1.0 / norm_p)) - log_gamma(1.0 + d / norm_p)


def _as_p(norm_p: Union[float, Norm]) -> float:
    p = norm_p.p if isinstance(norm_p, Norm) else float(norm_p)
    if not p > 0:
        raise EngineParameterError(f"norm exponent must be > 0, got {p}")
    return p


def lebesgue_measure(params: AnisoParams, norm_p: Union[float, Norm], base_radius: float,
                     d: int) -> MeasureResult:
    """ Volume of the super-ellipsoid {delta : |Sigma^-1 delta|_p <= R}

    Evaluated in log space; measure may overflow to inf for large d while
    log_measure stays finite.
    """
    p = _as_p(norm_p)
    if params.d != d:
        raise DimensionMismatchError(f"parameters have dimension {params.d}, expected {d}")
    if base_radius < 0:
        raise EngineParameterError("base_radius must be >= 0")
    if base_radius == 0:
        return MeasureResult(measure=0.0, log_measure=-math.inf)
    log_measure = (_log_unit_ball_constant(p, d) + d * math.log(base_radius)
                   + params.log_scale_volume())
    with np.errstate(over="ignore"):
        measure = float(np.exp(log_measure))
    return MeasureResult(measure=measure, log_measure=log_measure)


def alm_from_measure(measure: MeasureResult, norm_p: Union[float, Norm], d: int) -> float:
    """ Recovers |det Sigma|^(1/d) * R from the volume of the certified region """
    p = _as_p(norm_p)
    if math.isinf(measure.log_measure) and measure.log_measure < 0:
        return 0.0
    return math.exp((measure.log_measure - _log_unit_ball_constant(p, d)) / d)

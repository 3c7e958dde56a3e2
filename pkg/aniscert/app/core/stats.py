""" Clopper-Pearson lower bound and the exact binomial test

Both reduce to the regularized incomplete beta function,
P(X >= k | n, p) = I_p(k, n - k + 1), evaluated with a continued fraction.
"""
import logging
import math

from scipy.special import betaln

from .exceptions import InvalidProbabilityError, EngineParameterError
from ..enums import BinomialAlternative

logger = logging.getLogger(__name__)

_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAX_ITERATIONS = 10000

BISECTION_MAX_ITERATIONS = 200
BISECTION_TOLERANCE = 1e-13


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """ Modified Lentz evaluation of the incomplete beta continued fraction """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITERATIONS + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    logger.warning("incomplete beta continued fraction did not converge (a=%s, b=%s, x=%s)", a, b, x)
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """ I_x(a, b) for a, b > 0 and x in [0, 1] """
    if not (a > 0 and b > 0):
        raise EngineParameterError(f"incomplete beta needs a, b > 0, got a={a}, b={b}")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - betaln(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_continued_fraction(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_continued_fraction(b, a, 1.0 - x) / b


def _check_counts(k: int, n: int) -> None:
    if n < 1 or not 0 <= k <= n:
        raise EngineParameterError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")


def binomial_upper_tail(k: int, n: int, p: float) -> float:
    """ P(X >= k) for X ~ Binomial(n, p) """
    _check_counts(k, n)
    if k == 0:
        return 1.0
    return regularized_incomplete_beta(k, n - k + 1, p)


def binomial_lower_tail(k: int, n: int, p: float) -> float:
    """ P(X <= k) for X ~ Binomial(n, p) """
    _check_counts(k, n)
    if k == n:
        return 1.0
    return regularized_incomplete_beta(n - k, k + 1, 1.0 - p)


def lower_conf_bound(k: int, n: int, confidence: float) -> float:
    """ One-sided Clopper-Pearson lower bound on a binomial proportion

    The bound is the alpha-quantile of Beta(k, n - k + 1), alpha = 1 - confidence,
    found by bisection on I_p(k, n - k + 1) = alpha.

    Args:
        k: int, successes
        n: int, trials
        confidence: float in (0, 1)
    """
    if not 0.0 < confidence < 1.0:
        raise InvalidProbabilityError(f"confidence must lie in (0, 1), got {confidence}")
    _check_counts(k, n)
    if k == 0:
        return 0.0
    alpha = 1.0 - confidence
    low, high = 0.0, 1.0
    for _ in range(BISECTION_MAX_ITERATIONS):
        middle = 0.5 * (low + high)
        if regularized_incomplete_beta(k, n - k + 1, middle) < alpha:
            low = middle
        else:
            high = middle
        if high - low < BISECTION_TOLERANCE:
            break
    return 0.5 * (low + high)


def binomial_p_value(k: int, n: int, p0: float,
                     alternative: BinomialAlternative = BinomialAlternative.TWO_SIDED) -> float:
    """ Exact binomial test of H0: p = p0

    TWO_SIDED doubles the smaller tail and clamps at 1; GREATER is the upper tail.
    """
    if not 0.0 < p0 < 1.0:
        raise InvalidProbabilityError(f"p0 must lie in (0, 1), got {p0}")
    upper = binomial_upper_tail(k, n, p0)
    if alternative == BinomialAlternative.GREATER:
        return upper
    lower = binomial_lower_tail(k, n, p0)
    return min(1.0, 2.0 * min(upper, lower))

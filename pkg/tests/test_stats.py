import numpy as np
import pytest
from scipy import special, stats
from statsmodels.stats.proportion import proportion_confint

from aniscert.app.core.exceptions import EngineParameterError, InvalidProbabilityError
from aniscert.app.core.stats import (
    binomial_lower_tail, binomial_p_value, binomial_upper_tail, lower_conf_bound,
    regularized_incomplete_beta
)
from aniscert.app.enums import BinomialAlternative
from aniscert.app.utils import make_rng


@pytest.mark.parametrize("a,b", [(0.5, 0.5), (1.0, 3.0), (5.0, 2.0), (50.0, 51.0), (999.0, 2.0)])
def test_incomplete_beta_matches_scipy(a, b):
    x = np.linspace(0.0, 1.0, 41)
    ours = [regularized_incomplete_beta(a, b, value) for value in x]
    np.testing.assert_allclose(ours, special.betainc(a, b, x), rtol=1e-10, atol=1e-14)


def test_incomplete_beta_rejects_bad_shape():
    with pytest.raises(EngineParameterError):
        regularized_incomplete_beta(0.0, 1.0, 0.5)


@pytest.mark.parametrize("k,n", [(1, 10), (5, 10), (50, 100), (99, 100), (700, 1000), (100000, 100000)])
def test_lower_bound_matches_statsmodels(k, n):
    alpha = 0.001
    # the two-sided interval at level 2 alpha has the one-sided lower bound as its lower end
    expected, _ = proportion_confint(k, n, alpha=2 * alpha, method="beta")
    assert lower_conf_bound(k, n, 1.0 - alpha) == pytest.approx(expected, rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_all_successes_closed_form(n):
    assert lower_conf_bound(n, n, 0.999) == pytest.approx(0.001 ** (1.0 / n), abs=1e-10)


def test_no_successes_gives_zero():
    assert lower_conf_bound(0, 50, 0.999) == 0.0


def test_bound_makes_tail_equal_alpha():
    bound = lower_conf_bound(50, 100, 0.999)
    assert binomial_upper_tail(50, 100, bound) == pytest.approx(0.001, abs=1e-8)


def test_bound_increases_with_successes():
    bounds = [lower_conf_bound(k, 200, 0.99) for k in range(0, 201, 10)]
    assert np.all(np.diff(bounds) > 0)


def test_coverage():
    n, p, alpha, trials = 200, 0.7, 0.05, 20000
    draws = make_rng(0).binomial(n, p, size=trials)
    bounds = {int(k): lower_conf_bound(int(k), n, 1.0 - alpha) for k in np.unique(draws)}
    violations = np.mean([bounds[int(k)] > p for k in draws])
    assert violations <= alpha + 3.0 * np.sqrt(alpha / trials)


def test_invalid_arguments():
    with pytest.raises(InvalidProbabilityError):
        lower_conf_bound(3, 10, 1.0)
    with pytest.raises(EngineParameterError):
        lower_conf_bound(11, 10, 0.9)
    with pytest.raises(EngineParameterError):
        binomial_upper_tail(1, 0, 0.5)


def test_tails_match_scipy():
    for k in (0, 1, 37, 80, 100):
        assert binomial_upper_tail(k, 100, 0.4) == pytest.approx(stats.binom.sf(k - 1, 100, 0.4),
                                                                 rel=1e-9, abs=1e-15)
        assert binomial_lower_tail(k, 100, 0.4) == pytest.approx(stats.binom.cdf(k, 100, 0.4),
                                                                 rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("k", [0, 40, 50, 58, 70, 100])
def test_two_sided_test_matches_scipy(k):
    expected = stats.binomtest(k, 100, 0.5).pvalue
    assert binomial_p_value(k, 100, 0.5) == pytest.approx(expected, rel=1e-9)


def test_greater_alternative():
    expected = stats.binomtest(62, 100, 0.5, alternative="greater").pvalue
    assert binomial_p_value(62, 100, 0.5, BinomialAlternative.GREATER) == pytest.approx(
        expected, rel=1e-9)


def test_p_value_needs_open_p0():
    with pytest.raises(InvalidProbabilityError):
        binomial_p_value(3, 10, 1.0)

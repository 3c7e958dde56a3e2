import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from aniscert.app.core.distributions import (
    NoiseSamplerFactory, coordinate_variance, sample_anisotropic, sample_isotropic,
    to_anisotropic, unit_variance_scale
)
from aniscert.app.core.exceptions import (
    DimensionMismatchError, SingularCovarianceError, UnsupportedNoiseError
)
from aniscert.app.enums import NoiseFamily
from aniscert.app.models.data_models import AnisoParams, NoiseSpec


def spec(family, scale=1.0, a=None):
    return NoiseSpec(family=family, scale=scale, power_exponent=a)


def test_same_seed_same_draws():
    noise = spec(NoiseFamily.LAPLACE, 0.3)
    np.testing.assert_array_equal(sample_isotropic(noise, 4, 11, num=5),
                                  sample_isotropic(noise, 4, 11, num=5))
    assert not np.array_equal(sample_isotropic(noise, 4, 11, num=5),
                              sample_isotropic(noise, 4, 12, num=5))


def test_shapes():
    noise = spec(NoiseFamily.GAUSSIAN)
    assert sample_isotropic(noise, 3, 0).shape == (3,)
    assert sample_isotropic(noise, 3, 0, num=7).shape == (7, 3)


def test_gaussian_scale_is_standard_deviation():
    draws = sample_isotropic(spec(NoiseFamily.GAUSSIAN, 0.5), 2, 1, num=200000)
    np.testing.assert_allclose(draws.std(axis=0), 0.5, rtol=0.01)
    assert stats.kstest(draws[:20000, 0], stats.norm(scale=0.5).cdf).pvalue > 1e-4


def test_laplace_matches_scipy():
    draws = sample_isotropic(spec(NoiseFamily.LAPLACE, 0.7), 3, 2, num=20000)
    assert stats.kstest(draws[:, 1], stats.laplace(scale=0.7).cdf).pvalue > 1e-4


def test_uniform_linf_stays_in_cube():
    draws = sample_isotropic(spec(NoiseFamily.UNIFORM_LINF, 0.4), 5, 3, num=10000)
    assert np.abs(draws).max() <= 0.4
    assert stats.kstest(draws[:, 0], stats.uniform(loc=-0.4, scale=0.8).cdf).pvalue > 1e-4


def test_exp_linf_radius_is_gamma():
    d = 3
    draws = sample_isotropic(spec(NoiseFamily.EXP_LINF, 0.5), d, 4, num=20000)
    radius = np.abs(draws).max(axis=1)
    assert stats.kstest(radius, stats.gamma(a=d, scale=0.5).cdf).pvalue > 1e-4


def test_linf_radial_direction_on_cube_surface():
    draws = sample_isotropic(spec(NoiseFamily.EXP_LINF, 1.0), 4, 5, num=1000)
    ratio = draws / np.abs(draws).max(axis=1, keepdims=True)
    np.testing.assert_allclose(np.abs(ratio).max(axis=1), 1.0)


def test_power_law_radius_is_beta_prime():
    d, a = 2, 6.0
    draws = sample_isotropic(spec(NoiseFamily.POWER_LAW_LINF, 0.5, a), d, 6, num=20000)
    radius = np.abs(draws).max(axis=1) / 0.5
    assert stats.kstest(radius, stats.betaprime(d, a - d).cdf).pvalue > 1e-4


def test_power_law_needs_exponent_above_dimension():
    with pytest.raises(UnsupportedNoiseError):
        sample_isotropic(spec(NoiseFamily.POWER_LAW_LINF, 1.0, 3.0), 3, 0)


def test_power_exponent_only_for_power_law():
    with pytest.raises(ValidationError):
        NoiseSpec(family=NoiseFamily.POWER_LAW_LINF, scale=1.0)
    with pytest.raises(ValidationError):
        NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=1.0, power_exponent=4.0)


def test_scale_must_be_positive():
    with pytest.raises(ValidationError):
        NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=0.0)


def test_lambda_alias():
    assert NoiseSpec.parse_obj({"family": "laplace", "lambda": 0.25}).scale == 0.25


@pytest.mark.parametrize("family", [NoiseFamily.GAUSSIAN, NoiseFamily.LAPLACE,
                                    NoiseFamily.UNIFORM_LINF, NoiseFamily.EXP_LINF])
def test_coordinate_variance_matches_draws(family):
    d = 3
    noise = spec(family, 0.8)
    draws = sample_isotropic(noise, d, 7, num=400000)
    np.testing.assert_allclose(draws.var(axis=0).mean(), coordinate_variance(noise, d), rtol=0.02)


def test_unit_variance_scale():
    for family in (NoiseFamily.GAUSSIAN, NoiseFamily.LAPLACE, NoiseFamily.EXP_LINF):
        lam = unit_variance_scale(family, 4)
        assert coordinate_variance(spec(family, lam), 4) == pytest.approx(1.0)
    lam = unit_variance_scale(NoiseFamily.POWER_LAW_LINF, 2, power_exponent=10.0)
    assert coordinate_variance(spec(NoiseFamily.POWER_LAW_LINF, lam, 10.0), 2) == pytest.approx(1.0)


def test_unit_variance_scale_needs_finite_variance():
    with pytest.raises(UnsupportedNoiseError):
        unit_variance_scale(NoiseFamily.POWER_LAW_LINF, 2, power_exponent=4.0)


def test_to_anisotropic_diagonal(aniso_params):
    eps = np.array([[1.0, 1.0], [-2.0, 0.5]])
    np.testing.assert_allclose(to_anisotropic(eps, aniso_params),
                               [[0.6, 1.95], [-0.9, 0.95]])


def test_to_anisotropic_full_matrix():
    params = AnisoParams.from_matrix([[1.0, 0.5], [0.0, 2.0]], mu=[1.0, 0.0])
    np.testing.assert_allclose(to_anisotropic(np.array([1.0, 1.0]), params), [2.5, 2.0])


def test_to_anisotropic_dimension_mismatch(aniso_params):
    with pytest.raises(DimensionMismatchError):
        to_anisotropic(np.ones(3), aniso_params)


def test_sample_anisotropic_moments(aniso_params):
    draws = sample_anisotropic(spec(NoiseFamily.GAUSSIAN), aniso_params, 8, num=200000)
    np.testing.assert_allclose(draws.mean(axis=0), aniso_params.mu, atol=0.02)
    np.testing.assert_allclose(draws.std(axis=0), aniso_params.sigma, rtol=0.01)


def test_nonpositive_sigma_rejected():
    with pytest.raises(ValidationError):
        AnisoParams(sigma=[1.0, 0.0], mu=[0.0, 0.0])


def test_mismatched_mu_rejected():
    with pytest.raises(DimensionMismatchError):
        AnisoParams(sigma=[1.0, 1.0], mu=[0.0])


def test_singular_covariance_rejected_and_regularized():
    with pytest.raises(SingularCovarianceError):
        AnisoParams.from_matrix([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
    params = AnisoParams.from_matrix([[1.0, 1.0], [1.0, 1.000001]])
    assert params.regularized(0.1).log_scale_volume() > params.log_scale_volume()


def test_unknown_family_raises():
    class Fake:
        family = "cauchy"
    with pytest.raises(UnsupportedNoiseError):
        NoiseSamplerFactory.create(Fake())

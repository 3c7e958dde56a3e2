import numpy as np
import pytest
from pydantic import ValidationError

from aniscert.app.config import npg_settings
from aniscert.app.core.exceptions import (
    DimensionMismatchError, EngineParameterError, MissingInputError
)
from aniscert.app.core.nn_kernel import Tensor, mlp
from aniscert.app.core.npg import (
    CertificationWiseNpg, DatasetWiseNpg, IsotropicNpg, NpgFactory, PatternNpg, load_npg, npg_loss,
    pattern_sigma, save_npg, variance_term
)
from aniscert.app.enums import LayerKind, NoiseFamily, Norm, NpgKind, SigmaVariant
from aniscert.app.models.data_models import NoiseSpec, PatternSpec
from aniscert.app.utils import make_rng


@pytest.mark.parametrize("norm", list(Norm))
def test_pattern_center_and_symmetry(norm):
    sigma = pattern_sigma(PatternSpec(norm_p=norm, kappa=0.01, iota=0.3, height=28, width=28))
    assert sigma.shape == (28, 28)
    assert sigma[14, 14] == pytest.approx(0.3)
    assert sigma.min() == pytest.approx(0.3)
    # rows 1..27 are symmetric around the center row
    np.testing.assert_allclose(sigma[1:, 1:], sigma[1:, 1:][::-1, ::-1])


def test_pattern_grows_with_distance():
    sigma = pattern_sigma(PatternSpec(kappa=0.5, iota=1.0, height=5, width=5))
    assert sigma[2, 4] == pytest.approx(1.0 + 0.5 * 4)
    assert sigma[0, 0] == pytest.approx(1.0 + 0.5 * 8)


def test_pattern_norms_differ_off_axis():
    values = {norm: pattern_sigma(PatternSpec(norm_p=norm, kappa=1.0, iota=1.0, height=5,
                                              width=5))[0, 0] for norm in Norm}
    assert values[Norm.L1] == pytest.approx(17.0)
    assert values[Norm.L2] == pytest.approx(9.0)
    assert values[Norm.LINF] == pytest.approx(5.0)


def test_pattern_target_mean():
    sigma = pattern_sigma(PatternSpec(kappa=0.01, iota=0.3, height=28, width=28, target_mean=1.7))
    assert sigma.mean() == pytest.approx(1.7)


def test_pattern_rejects_bad_values():
    with pytest.raises(ValidationError):
        PatternSpec(kappa=-1.0, height=3, width=3)
    with pytest.raises(ValidationError):
        PatternSpec(iota=0.0, height=3, width=3)


def test_pattern_npg_below_floor():
    with pytest.raises(EngineParameterError):
        PatternNpg(PatternSpec(kappa=0.0, iota=1e-4, height=2, width=2))


def test_pattern_npg_params():
    npg = PatternNpg(PatternSpec(kappa=0.1, iota=0.5, height=3, width=4))
    params = npg.generate_params()
    assert params.sigma.shape == (12,)
    np.testing.assert_array_equal(params.mu, np.zeros(12))
    assert not npg.trainable


def test_isotropic_npg():
    params = IsotropicNpg(5).generate_params()
    np.testing.assert_array_equal(params.sigma, np.ones(5))
    np.testing.assert_array_equal(params.mu, np.zeros(5))


def test_dataset_wise_ranges():
    npg = DatasetWiseNpg(6, gamma=0.7, sigma_floor=0.01, hidden=8, constant_length=4, seed=2)
    params = npg.generate_params()
    assert np.all(params.sigma >= 0.01)
    assert np.all(params.sigma <= 0.71)
    assert np.all(np.abs(params.mu) <= 0.7)
    assert npg.trainable


def test_dataset_wise_ignores_input():
    npg = DatasetWiseNpg(3, hidden=8, constant_length=4, seed=2)
    first = npg.generate_params(np.zeros(3))
    second = npg.generate_params(np.ones(3))
    np.testing.assert_array_equal(first.sigma, second.sigma)


def test_certification_wise_needs_input():
    npg = CertificationWiseNpg((2, 2), growth=2, depth=2)
    with pytest.raises(MissingInputError):
        npg.generate_params()


def test_certification_wise_batch_shapes():
    npg = CertificationWiseNpg((3, 3), gamma=0.5, growth=2, depth=2, seed=1)
    sigma, mu = npg.generate_tensors(make_rng(0).uniform(size=(4, 9)))
    assert sigma.shape == mu.shape == (4, 9)
    assert np.all(sigma.data >= npg.sigma_floor)
    assert np.all(np.abs(mu.data) <= 0.5)


def test_certification_wise_depends_on_input():
    npg = CertificationWiseNpg((2, 3), growth=2, depth=2, seed=4)
    first = npg.generate_params(np.zeros(6))
    second = npg.generate_params(np.full(6, 0.9))
    assert not np.allclose(first.sigma, second.sigma)


def test_generate_params_checks_dimension():
    npg = CertificationWiseNpg((2, 2), growth=2, depth=2)
    with pytest.raises(DimensionMismatchError):
        npg.generate_params(np.zeros(5))


@pytest.mark.parametrize("npg", [
    DatasetWiseNpg(4, gamma=0.5, hidden=8, constant_length=4, seed=7),
    CertificationWiseNpg((2, 2), gamma=0.5, growth=2, depth=2, seed=7),
    PatternNpg(PatternSpec(kappa=0.2, iota=0.4, height=2, width=2, target_mean=1.0)),
    IsotropicNpg(4),
])
def test_save_load_round_trip(tmp_path, npg):
    path = str(tmp_path / "npg.ckpt")
    save_npg(npg, path)
    loaded = load_npg(path)
    x = np.array([0.1, 0.5, 0.9, 0.3])
    assert loaded.kind == npg.kind
    expected = npg.generate_params(x if npg.needs_input else None)
    actual = loaded.generate_params(x if loaded.needs_input else None)
    np.testing.assert_array_equal(actual.sigma, expected.sigma)
    np.testing.assert_array_equal(actual.mu, expected.mu)


def test_factory_checks_dimension():
    with pytest.raises(DimensionMismatchError):
        NpgFactory.create(NpgKind.PATTERN, 10, image_shape=(3, 3))


def test_factory_pattern_needs_shape():
    with pytest.raises(MissingInputError):
        NpgFactory.create(NpgKind.PATTERN, 9)


def test_factory_kinds():
    assert isinstance(NpgFactory.create(NpgKind.ISOTROPIC, 4), IsotropicNpg)
    assert isinstance(NpgFactory.create(NpgKind.CERTIFICATION_WISE, 4, image_shape=(2, 2)),
                      CertificationWiseNpg)


@pytest.mark.parametrize("kind", [NpgKind.PATTERN, NpgKind.DATASET_WISE, NpgKind.CERTIFICATION_WISE])
def test_factory_rejects_zero_gamma(kind):
    with pytest.raises(EngineParameterError):
        NpgFactory.create(kind, 4, image_shape=(2, 2), gamma=0.0)


def test_factory_keeps_explicit_gamma():
    assert NpgFactory.create(NpgKind.DATASET_WISE, 4, gamma=0.25).gamma == 0.25
    assert NpgFactory.create(NpgKind.DATASET_WISE, 4).gamma == npg_settings.dataset_gamma


def test_soft_min_approaches_min():
    sigma = Tensor(np.array([[0.5, 2.0, 3.0]]))
    assert float(variance_term(sigma, SigmaVariant.MIN_SIGMA, tau=1e-3).data) == pytest.approx(
        0.5, abs=1e-3)
    assert float(variance_term(sigma, SigmaVariant.MEAN_SIGMA).data) == pytest.approx(11.0 / 6.0)


def test_loss_without_trainable_generator():
    classifier = mlp([2, 3, 2], seed=0, activation=LayerKind.TANH)
    spec = NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=0.5)
    result = npg_loss(IsotropicNpg(2), classifier, np.full((3, 2), 0.5), np.array([0, 1, 0]), spec)
    assert result.variance_term == 0.0
    assert result.loss == pytest.approx(result.cross_entropy)
    assert not any(key.startswith("npg/") for key in result.grads)
    assert set(result.grads) == {f"classifier/{name}" for name in classifier.parameters()}


def test_loss_with_dataset_generator():
    classifier = mlp([2, 3, 2], seed=0, activation=LayerKind.TANH)
    npg = DatasetWiseNpg(2, hidden=8, constant_length=4, seed=1)
    spec = NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=0.5)
    result = npg_loss(npg, classifier, np.full((3, 2), 0.5), np.array([0, 1, 0]), spec, seed=3)
    assert result.loss == pytest.approx(result.cross_entropy - result.variance_term)
    assert result.variance_term > 0
    assert {f"npg/{name}" for name in npg.parameters()} <= set(result.grads)
    # the same seed reproduces the same noise draw
    again = npg_loss(npg, classifier, np.full((3, 2), 0.5), np.array([0, 1, 0]), spec, seed=3)
    assert again.loss == result.loss


def test_loss_needs_batch():
    with pytest.raises(EngineParameterError):
        npg_loss(IsotropicNpg(2), mlp([2, 2]), np.zeros((0, 2)), np.zeros(0, dtype=int),
                 NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=0.5))

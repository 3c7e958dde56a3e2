from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from aniscert.app.core.cert_math import inverse_normal_cdf
from aniscert.app.core.exceptions import DimensionMismatchError, EngineParameterError
from aniscert.app.core.npg import IsotropicNpg, PatternNpg
from aniscert.app.core.smoothing import (
    ABSTAIN, LinearClassifier, LookupClassifier, SmoothedClassifier, accuracy_curves,
    certified_sizes, certify, certify_with_params, classify_samples, compare_curves,
    evaluate_campaign, predict, predict_with_params, summarize
)
from aniscert.app.enums import NoiseFamily, Norm, Verdict
from aniscert.app.models.data_models import AnisoParams, NoiseSpec, PatternSpec


def test_tally_counts_every_draw(gaussian, boundary_classifier):
    tally = classify_samples(boundary_classifier, np.array([0.5, 0.5]), AnisoParams.isotropic(2),
                             gaussian, 1001, seed=0, chunk_size=100)
    assert tally.n == 1001
    assert int(tally.counts.sum()) == 1001


def test_tally_independent_of_workers(gaussian, boundary_classifier, aniso_params):
    x = np.array([0.5, 0.5])
    serial = classify_samples(boundary_classifier, x, aniso_params, gaussian, 2000, seed=4,
                              chunk_size=128, workers=1)
    threaded = classify_samples(boundary_classifier, x, aniso_params, gaussian, 2000, seed=4,
                                chunk_size=128, workers=4, executor_cls=ThreadPoolExecutor)
    np.testing.assert_array_equal(serial.counts, threaded.counts)


def test_tally_depends_on_stream(gaussian, boundary_classifier):
    x = np.array([0.5, 0.5])
    params = AnisoParams.isotropic(2)
    first = classify_samples(boundary_classifier, x, params, gaussian, 500, seed=1, stream=0)
    second = classify_samples(boundary_classifier, x, params, gaussian, 500, seed=1, stream=1)
    assert not np.array_equal(first.counts, second.counts)


def test_tally_rejects_bad_parameters(gaussian, boundary_classifier):
    params = AnisoParams.isotropic(2)
    with pytest.raises(EngineParameterError):
        classify_samples(boundary_classifier, np.zeros(2), params, gaussian, 0, seed=0)
    with pytest.raises(EngineParameterError):
        classify_samples(boundary_classifier, np.zeros(2), params, gaussian, 10, seed=0,
                         chunk_size=0)
    with pytest.raises(DimensionMismatchError):
        classify_samples(boundary_classifier, np.zeros(3), params, gaussian, 10, seed=0)


def test_constant_classifier_bound_is_closed_form(gaussian):
    f = LookupClassifier.constant(1, 2, 3)
    result = certify(f, IsotropicNpg(2), np.array([0.3, 0.7]), gaussian, Norm.L2,
                     n0=10, n=500, alpha=0.001, seed=0)
    expected = 0.001 ** (1.0 / 500)
    assert result.verdict == Verdict.CERTIFIED
    assert result.predicted == 1
    assert result.p_a_lower == pytest.approx(expected, abs=1e-10)
    assert result.radius == pytest.approx(0.5 * inverse_normal_cdf(expected), rel=1e-8)


def test_anisotropic_certificate_scales(gaussian):
    f = LookupClassifier.constant(0, 2, 2)
    params = AnisoParams(sigma=[0.25, 4.0], mu=[0.0, 0.0])
    result = certify_with_params(f, params, np.zeros(2), gaussian, Norm.L2, 10, 500, 0.001, 0)
    base = result.certificate.base_radius
    assert result.radius == pytest.approx(0.25 * base)
    assert result.alm == pytest.approx(1.0 * base)


def test_boundary_input_abstains(gaussian, boundary_classifier):
    x = np.array([0.5, 0.5])
    result = certify(boundary_classifier, IsotropicNpg(2), x, gaussian, Norm.L2, n0=50, n=1000,
                     alpha=0.001, seed=2)
    assert result.verdict == Verdict.ABSTAIN
    assert result.certificate is None
    assert predict(boundary_classifier, IsotropicNpg(2), x, gaussian, n=1000, alpha=0.001,
                   seed=2) == ABSTAIN


def test_confident_input_certifies(gaussian, boundary_classifier):
    x = np.array([0.95, 0.95])
    result = certify(boundary_classifier, IsotropicNpg(2), x, gaussian, Norm.L2, n0=50, n=1000,
                     alpha=0.001, seed=2)
    assert result.verdict == Verdict.CERTIFIED
    assert result.predicted == 1
    assert result.p_a_lower > 0.5
    assert predict(boundary_classifier, IsotropicNpg(2), x, gaussian, n=1000, alpha=0.001,
                   seed=2) == 1


def test_certify_is_deterministic(gaussian, boundary_classifier):
    x = np.array([0.7, 0.6])
    first = certify(boundary_classifier, IsotropicNpg(2), x, gaussian, Norm.L2, 20, 300, 0.01, 9)
    second = certify(boundary_classifier, IsotropicNpg(2), x, gaussian, Norm.L2, 20, 300, 0.01, 9)
    assert first == second


def test_lower_bound_rarely_exceeds_true_probability(gaussian):
    # halfspace at distance lambda * Phi^-1(0.8) from x: the true p_A is 0.8
    f = LinearClassifier(np.array([1.0]), gaussian.scale * inverse_normal_cdf(0.8))
    params = AnisoParams.isotropic(1)
    alpha, runs = 0.05, 1000
    exceeded = sum(
        certify_with_params(f, params, np.zeros(1), gaussian, Norm.L2, 10, 100, alpha,
                            seed).p_a_lower > 0.8
        for seed in range(runs)
    )
    spread = np.sqrt(alpha * (1.0 - alpha) / runs)
    assert exceeded / runs <= alpha + 3.0 * spread


def test_smaller_alpha_never_certifies_an_abstention(gaussian, boundary_classifier):
    x = np.array([0.55, 0.55])
    alphas = [0.2, 0.05, 0.01, 1e-3, 1e-4]
    for seed in range(10):
        results = [certify(boundary_classifier, IsotropicNpg(2), x, gaussian, Norm.L2, 20, 2000,
                           alpha, seed) for alpha in alphas]
        bounds = [result.p_a_lower for result in results]
        assert bounds == sorted(bounds, reverse=True)
        abstained = [result.verdict == Verdict.ABSTAIN for result in results]
        first = abstained.index(True) if True in abstained else len(abstained)
        assert all(abstained[first:])


def test_engine_parameters_checked(gaussian, boundary_classifier):
    params = AnisoParams.isotropic(2)
    with pytest.raises(EngineParameterError):
        certify_with_params(boundary_classifier, params, np.zeros(2), gaussian, Norm.L2, 0, 10,
                            0.01, 0)
    with pytest.raises(EngineParameterError):
        certify_with_params(boundary_classifier, params, np.zeros(2), gaussian, Norm.L2, 10, 10,
                            1.0, 0)
    with pytest.raises(EngineParameterError):
        predict_with_params(boundary_classifier, params, np.zeros(2), gaussian, 0, 0.01, 0)


def test_smoothed_classifier_checks_dimension(gaussian, boundary_classifier):
    with pytest.raises(DimensionMismatchError):
        SmoothedClassifier(boundary_classifier, IsotropicNpg(3), gaussian)


def test_smoothed_classifier_binds_engine(gaussian, boundary_classifier):
    npg = PatternNpg(PatternSpec(kappa=0.1, iota=0.5, height=1, width=2))
    smoothed = SmoothedClassifier(boundary_classifier, npg, gaussian, chunk_size=64, workers=2)
    result = smoothed.certify(np.array([0.9, 0.9]), n0=20, n=400, alpha=0.01, seed=1)
    direct = certify(boundary_classifier, npg, np.array([0.9, 0.9]), gaussian, Norm.L2, 20, 400,
                     0.01, 1, chunk_size=64)
    assert result == direct
    assert smoothed.predict(np.array([0.9, 0.9]), n=400, alpha=0.01, seed=1) == 1


def test_multiclass_linear_classifier():
    f = LinearClassifier(np.eye(3), np.zeros(3))
    assert f.num_classes == 3
    np.testing.assert_array_equal(f.classify(np.array([[0.1, 0.9, 0.2], [0.5, 0.0, 0.0]])), [1, 0])


def test_lookup_grid():
    f = LookupClassifier(np.array([[0, 1], [1, 0]]), 2)
    np.testing.assert_array_equal(
        f.classify(np.array([[0.1, 0.1], [0.1, 0.9], [0.9, 0.1], [1.5, 1.5]])), [0, 1, 1, 0])


@pytest.fixture
def report(blobs, gaussian, boundary_classifier):
    return evaluate_campaign(blobs, boundary_classifier, IsotropicNpg(2), gaussian, Norm.L2,
                             n0=20, n=200, alpha=0.01, seed=5, progress=False)


def test_isotropic_campaign_curves_coincide(report):
    assert len(report.results) == 40
    for point in report.curve:
        assert point.acc_radius == point.acc_alm
    assert report.summary.average_radius == pytest.approx(report.summary.average_alm)
    assert report.summary.min_sigma_at_least_one == 1.0


def test_campaign_curve_starts_at_certified_accuracy(report):
    first = report.curve[0]
    assert first.threshold == 0.0
    assert first.acc_radius == pytest.approx(report.summary.certified_correct / 40)
    assert report.summary.certified_correct > 30


def test_campaign_max_examples(blobs, gaussian, boundary_classifier):
    report = evaluate_campaign(blobs, boundary_classifier, IsotropicNpg(2), gaussian, Norm.L2,
                               n0=10, n=50, alpha=0.01, seed=5, max_examples=3, progress=False)
    assert [example.example_id for example in report.results] == [0, 1, 2]


def test_empty_campaign_rejected(blobs, gaussian, boundary_classifier):
    with pytest.raises(EngineParameterError):
        evaluate_campaign(blobs, boundary_classifier, IsotropicNpg(2), gaussian, Norm.L2,
                          max_examples=0, progress=False)


def test_accuracy_curves_and_summary(report):
    sizes = certified_sizes(report.results)
    curve = accuracy_curves(report.results, [0.0, float(np.max(sizes)) + 1.0])
    assert curve[-1].acc_radius == 0.0
    summary = summarize(report.results)
    assert summary == report.summary


def test_compare_curves_doubling():
    baseline = np.array([0.5, 1.0, -np.inf, 0.2])
    comparison = compare_curves(2.0 * baseline, baseline)
    assert comparison.dominance_fraction == 1.0
    assert comparison.auc_baseline == pytest.approx(1.7 / 4)
    assert comparison.relative_gain == pytest.approx(1.0)


def test_compare_curves_without_baseline_area():
    comparison = compare_curves(np.array([0.3]), np.array([-np.inf]))
    assert comparison.auc_baseline == 0.0
    assert comparison.relative_gain == np.inf


def test_laplace_campaign_uses_l1(blobs, boundary_classifier):
    spec = NoiseSpec(family=NoiseFamily.LAPLACE, scale=0.3)
    result = certify(boundary_classifier, IsotropicNpg(2), np.array([0.95, 0.9]), spec, Norm.L1,
                     n0=20, n=500, alpha=0.01, seed=0)
    assert result.certificate.norm == Norm.L1
    assert result.radius == pytest.approx(-0.3 * np.log(2.0 * (1.0 - result.p_a_lower)))

""" Oracle verification suite

Catalog
1. transformation_equivalence   anisotropic tallies == isotropic tallies of the transformed classifier
2. linear_tightness             Gaussian l2 radius == exact flip distance; grid search finds no interior flip
3. radius_formulas              monotonicity, lambda scaling and spot values of every radius formula
4. volume                       closed-form super-ellipsoid volume vs hit-rate estimate
5. clopper_pearson              closed-form k = n bound, tail oracle and coverage simulation
6. gradients                    autodiff vs central differences for every layer kind and the joint loss
7. isotropic_degeneration       sigma = 1, mu = 0 reproduces the isotropic pipeline
8. pattern                      center value, monotonicity and mean normalization of sigma patterns
9. analytic_smoothing           closed-form smoothed probability vs Monte-Carlo frequency
10. anisotropic_gain            pattern-wise ALM curve dominates the isotropic one

Quick mode shrinks instance counts and sample sizes; full mode runs the
acceptance sizes.
"""
import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .base_services import BaseVerificationService, BaseServiceFactory
from ..core.cert_math import (
    RADIUS_FORMULAS, lebesgue_measure, radius_binary
)
from ..core.nn_kernel import (
    Module, Sequential, Tensor, backward, cross_entropy, forward, mlp, no_grad, softmax
)
from ..core.npg import (
    CertificationWiseNpg, DatasetWiseNpg, IsotropicNpg, PatternNpg, npg_loss, pattern_sigma
)
from ..core.oracle import (
    MAX_SEARCH_DIM, analytic_gaussian_pa, grid_flip_search, linear_flip_distance, mc_volume,
    transformation_tallies
)
from ..core.smoothing import (
    LinearClassifier, certified_sizes, certify_with_params, classify_samples, compare_curves,
    evaluate_campaign
)
from ..core.stats import binomial_upper_tail, lower_conf_bound
from ..data_io import diagonal_boundary, synth_gaussians
from ..enums import LayerKind, NoiseFamily, Norm, SigmaVariant
from ..models.data_models import (
    AnisoParams, CheckReport, Dataset, LayerSpec, LinearModel, NoiseSpec, PatternSpec
)
from ..utils import Stopwatch, make_rng

logger = logging.getLogger(__name__)

CheckResult = Tuple[bool, str, Optional[float]]


def relative_error(estimate: float, exact: float, floor: float = 1e-6) -> float:
    return abs(estimate - exact) / max(abs(estimate), abs(exact), floor)


def gradient_check(loss: Callable[[], float], params: Dict[str, Tensor],
                   grads: Dict[str, np.ndarray], rng: np.random.Generator,
                   samples: int = 2, h: float = 1e-5) -> float:
    """ Largest relative error between grads and central differences of loss

    samples random entries of every parameter tensor are perturbed by +-h.
    """
    worst = 0.0
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        for index in rng.choice(flat.size, size=min(samples, flat.size), replace=False):
            original = tensor.data.copy()
            shifted = original.reshape(-1).copy()
            shifted[index] += h
            tensor.data = shifted.reshape(original.shape)
            upper = loss()
            shifted[index] -= 2.0 * h
            tensor.data = shifted.reshape(original.shape)
            lower = loss()
            tensor.data = original
            numeric = (upper - lower) / (2.0 * h)
            worst = max(worst, relative_error(float(grads[name].reshape(-1)[index]), numeric))
    return worst


def _dense_stack(seed: int) -> Sequential:
    specs = [
        LayerSpec(kind=LayerKind.DENSE, params={"in_features": 3, "out_features": 4}),
        LayerSpec(kind=LayerKind.TANH),
        LayerSpec(kind=LayerKind.DENSE, params={"in_features": 4, "out_features": 4}),
        LayerSpec(kind=LayerKind.LEAKY_RELU),
        LayerSpec(kind=LayerKind.DENSE, params={"in_features": 4, "out_features": 3}),
        LayerSpec(kind=LayerKind.AMPLIFIED_TANH, gamma=2.0),
        LayerSpec(kind=LayerKind.SOFTMAX),
    ]
    return Sequential.from_specs(specs, seed)


def _conv_stack(seed: int) -> Sequential:
    specs = [
        LayerSpec(kind=LayerKind.CONV2D, params={"in_channels": 1, "out_channels": 2, "kernel_size": 3}),
        LayerSpec(kind=LayerKind.TANH),
        LayerSpec(kind=LayerKind.CONV2D, params={"in_channels": 2, "out_channels": 1, "kernel_size": 3}),
        LayerSpec(kind=LayerKind.LEAKY_RELU),
    ]
    return Sequential.from_specs(specs, seed)


def module_gradient_error(model: Module, inputs: np.ndarray, rng: np.random.Generator) -> float:
    """ Gradient check of L = sum(model(inputs) * r) for a random weighting r """
    weighting = rng.standard_normal(model.predict(inputs).shape)
    forward(model, inputs)
    grads = backward(model, weighting)
    return gradient_check(lambda: float(np.sum(model.predict(inputs) * weighting)),
                          model.parameters(), grads, rng)


class OracleVerificationService(BaseVerificationService):
    """ Runs every oracle check and reports pass/fail with timings

    sign_bug flips the sign of Sigma x in the transformed classifier, which
    the transformation check must catch.
    """

    def __init__(self, full: bool = False, seed: int = 0, sign_bug: bool = False, **kwargs) -> None:
        self.full = full
        self.seed = seed
        self.sign_bug = sign_bug
        self._checks: Dict[str, Callable[[], CheckResult]] = {
            "transformation_equivalence": self.check_transformation_equivalence,
            "linear_tightness": self.check_linear_tightness,
            "radius_formulas": self.check_radius_formulas,
            "volume": self.check_volume,
            "clopper_pearson": self.check_clopper_pearson,
            "gradients": self.check_gradients,
            "isotropic_degeneration": self.check_isotropic_degeneration,
            "pattern": self.check_pattern,
            "analytic_smoothing": self.check_analytic_smoothing,
            "anisotropic_gain": self.check_anisotropic_gain,
        }

    @property
    def grid_density(self) -> int:
        """ Points per axis of the flip search grid, 200^3 at d = 3 in full mode """
        return self._size(21, 200)

    @property
    def check_names(self) -> List[str]:
        return list(self._checks)

    def _size(self, quick: int, full: int) -> int:
        return full if self.full else quick

    def _rng(self, stream: int) -> np.random.Generator:
        return make_rng(self.seed, stream)

    def run(self, only: Optional[List[str]] = None, **kwargs) -> List[CheckReport]:
        reports = []
        for name, check in self._checks.items():
            if only and name not in only:
                continue
            with Stopwatch() as watch:
                try:
                    passed, detail, standard_error = check()
                except Exception as e:
                    logger.exception("check %s raised", name)
                    passed, detail, standard_error = False, f"{type(e).__name__}: {e}", None
            reports.append(CheckReport(name=name, passed=passed, detail=detail,
                                       seconds=watch.seconds, standard_error=standard_error))
            logger.info("%s %s in %.2fs: %s", name, "passed" if passed else "FAILED",
                        watch.seconds, detail)
        return reports

    def check_transformation_equivalence(self) -> CheckResult:
        rng = self._rng(1)
        families = [NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=1.0),
                    NoiseSpec(family=NoiseFamily.LAPLACE, scale=0.5),
                    NoiseSpec(family=NoiseFamily.UNIFORM_LINF, scale=1.0),
                    NoiseSpec(family=NoiseFamily.EXP_LINF, scale=0.3)]
        instances = self._size(20, 100)
        n = self._size(200, 1000)
        mismatches = 0
        for i in range(instances):
            d = int(rng.integers(2, 4))
            f = LinearClassifier(rng.standard_normal((3, d)), rng.standard_normal(3))
            x = rng.uniform(0.1, 0.9, d)
            params = AnisoParams(sigma=rng.uniform(0.3, 2.0, d), mu=0.1 * rng.standard_normal(d))
            anisotropic, isotropic = transformation_tallies(
                f, x, params, families[i % len(families)], n, int(rng.integers(2 ** 31)),
                sign_bug=self.sign_bug)
            if not np.array_equal(anisotropic.counts, isotropic.counts):
                mismatches += 1
        return mismatches == 0, f"{mismatches}/{instances} instances with differing tallies", None

    def check_linear_tightness(self) -> CheckResult:
        rng = self._rng(2)
        instances = self._size(10, 50)
        searched = self._size(3, 10)
        density = self.grid_density
        worst = 0.0
        interior_flips = 0
        missed_flips = 0
        for i in range(instances):
            d = int(rng.integers(2, 4))
            if self.full and i < searched:
                d = MAX_SEARCH_DIM
            w = rng.standard_normal(d)
            x = rng.uniform(0.0, 1.0, d)
            params = AnisoParams(sigma=rng.uniform(0.5, 2.0, d), mu=np.zeros(d))
            # margin of t noise standard deviations, so p_A = Phi(t)
            t = rng.uniform(0.2, 2.5)
            b = t * float(np.linalg.norm(w * params.sigma)) - float(w @ x)
            model = LinearModel(w=w, b=b)
            p_a = analytic_gaussian_pa(model, x, params, 1.0)
            spec = NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=1.0)
            radius = radius_binary(spec, Norm.L2, d, p_a)
            worst = max(worst, relative_error(radius, linear_flip_distance(model, x, params, Norm.L2)))
            if i < searched:
                if grid_flip_search(model, x, params, Norm.L2, radius, density) is not None:
                    interior_flips += 1
                if grid_flip_search(model, x, params, Norm.L2, radius, density,
                                    inflation=1.05) is None:
                    missed_flips += 1
        passed = worst <= 1e-6 and interior_flips == 0 and missed_flips == 0
        return passed, (f"max relative error {worst:.2e}; interior flips {interior_flips}/{searched}; "
                        f"missed flips at 1.05x {missed_flips}/{searched}"), None

    def check_radius_formulas(self) -> CheckResult:
        points = np.linspace(0.5, 1.0, self._size(202, 1002))[1:-1]
        d = 2
        failures = []
        for family, norm in RADIUS_FORMULAS:
            exponent = 5.0 if family == NoiseFamily.POWER_LAW_LINF else None
            spec = NoiseSpec(family=family, scale=0.7, power_exponent=exponent)
            scaled = NoiseSpec(family=family, scale=0.7 * 3.0, power_exponent=exponent)
            radii = np.array([radius_binary(spec, norm, d, p) for p in points])
            if np.any(np.diff(radii) < -1e-12):
                failures.append(f"{family.value}/{norm.value} not monotone")
            tripled = np.array([radius_binary(scaled, norm, d, p) for p in points])
            if np.max(np.abs(tripled - 3.0 * radii) / np.maximum(3.0 * radii, 1e-12)) > 1e-12:
                failures.append(f"{family.value}/{norm.value} not linear in lambda")
        spots = [
            (NoiseSpec(family=NoiseFamily.LAPLACE, scale=1.0), Norm.L1, 0.75, math.log(2.0)),
            (NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=1.0), Norm.L2, 0.5, 0.0),
            (NoiseSpec(family=NoiseFamily.UNIFORM_LINF, scale=1.3), Norm.L1, 1.0, 1.3),
        ]
        for spec, norm, p, expected in spots:
            value = radius_binary(spec, norm, d, p)
            if abs(value - expected) > 1e-10:
                failures.append(f"{spec.family.value}/{norm.value} at {p}: {value} != {expected}")
        detail = "; ".join(failures) or f"{len(RADIUS_FORMULAS)} formulas checked"
        return not failures, detail, None

    def check_volume(self) -> CheckResult:
        rng = self._rng(4)
        samples = self._size(400000, 1000000)
        failures = []
        worst_se = 0.0
        cases = [(1.0, np.ones(2), 2.0)]
        for d in (1, 2, 3):
            for p in (1.0, 2.0, 64.0):
                cases.append((rng.uniform(0.5, 1.5), rng.uniform(0.5, 2.0, d), p))
        for index, (radius, sigma, p) in enumerate(cases):
            d = sigma.shape[0]
            params = AnisoParams(sigma=sigma, mu=np.zeros(d))
            exact = lebesgue_measure(params, p, radius, d).measure
            estimate = mc_volume(params, p, radius, d, samples, seed=self.seed + index)
            worst_se = max(worst_se, estimate.standard_error / exact)
            error = relative_error(estimate.volume, exact)
            if error > 0.02:
                failures.append(f"d={d} p={p:g}: {estimate.volume:.5g} vs {exact:.5g} "
                                f"(se {estimate.standard_error:.2g})")
        detail = "; ".join(failures) or f"{len(cases)} volumes within 2% ({samples} samples each)"
        return not failures, detail, worst_se

    def check_clopper_pearson(self) -> CheckResult:
        failures = []
        alpha = 0.001
        for n in (10, 100, 1000):
            bound = lower_conf_bound(n, n, 1.0 - alpha)
            if abs(bound - alpha ** (1.0 / n)) > 1e-10:
                failures.append(f"k=n={n}: {bound} != {alpha ** (1.0 / n)}")
        tail = binomial_upper_tail(50, 100, lower_conf_bound(50, 100, 1.0 - alpha))
        if abs(tail - alpha) > 1e-8:
            failures.append(f"tail at the k=50 bound is {tail}")

        trials = self._size(20000, 100000)
        coverage_alpha, p_true, n = 0.05, 0.7, 200
        draws = self._rng(5).binomial(n, p_true, size=trials)
        bounds = {int(k): lower_conf_bound(int(k), n, 1.0 - coverage_alpha) for k in np.unique(draws)}
        violations = float(np.mean([bounds[int(k)] > p_true for k in draws]))
        limit = coverage_alpha + 3.0 * math.sqrt(coverage_alpha / trials)
        if violations > limit:
            failures.append(f"coverage violation rate {violations:.4f} > {limit:.4f}")
        detail = "; ".join(failures) or f"coverage violation rate {violations:.4f} (limit {limit:.4f})"
        return not failures, detail, math.sqrt(coverage_alpha * (1 - coverage_alpha) / trials)

    def check_gradients(self) -> CheckResult:
        seeds = self._size(10, 100)
        worst = 0.0
        for seed in range(seeds):
            rng = make_rng(self.seed, 6, seed)
            worst = max(worst, module_gradient_error(_dense_stack(seed), rng.standard_normal((4, 3)), rng))
            worst = max(worst, module_gradient_error(_conv_stack(seed), rng.standard_normal((2, 1, 4, 4)),
                                                     rng))
            worst = max(worst, self._joint_loss_error(seed, rng))

        rng = self._rng(7)
        logits = Tensor.parameter(rng.standard_normal((5, 4)))
        labels = rng.integers(0, 4, 5)
        cross_entropy(logits, labels).backward()
        with no_grad():
            probabilities = softmax(Tensor(logits.data)).data
        expected = (probabilities - np.eye(4)[labels]) / 5.0
        fused = float(np.max(np.abs(logits.grad - expected)))

        passed = worst <= 1e-3 and fused <= 1e-9
        return passed, f"max relative error {worst:.2e}; softmax cross-entropy deviation {fused:.1e}", None

    def _joint_loss_error(self, seed: int, rng: np.random.Generator) -> float:
        spec = NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=0.5)
        classifier = mlp([2, 4, 2], seed=seed, activation=LayerKind.TANH)
        inputs = rng.uniform(0.0, 1.0, (5, 2))
        labels = rng.integers(0, 2, 5)
        worst = 0.0
        generators = [DatasetWiseNpg(2, hidden=8, constant_length=4, seed=seed),
                      CertificationWiseNpg((1, 2), growth=2, depth=2, seed=seed)]
        for npg in generators:
            variant = SigmaVariant.MIN_SIGMA if seed % 2 else SigmaVariant.MEAN_SIGMA
            result = npg_loss(npg, classifier, inputs, labels, spec, variant, seed=seed)
            params = {f"npg/{name}": tensor for name, tensor in npg.parameters().items()}
            params.update({f"classifier/{name}": tensor
                           for name, tensor in classifier.parameters().items()})
            worst = max(worst, gradient_check(
                lambda: npg_loss(npg, classifier, inputs, labels, spec, variant, seed=seed).loss,
                params, result.grads, rng, samples=1))
        return worst

    def check_isotropic_degeneration(self) -> CheckResult:
        dataset = synth_gaussians(2, 2, 10, 4.0, seed=self.seed)
        w, b = diagonal_boundary(2)
        f = LinearClassifier(w, b)
        spec = NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=0.25)
        n = self._size(500, 2000)
        report = evaluate_campaign(dataset, f, IsotropicNpg(2), spec, Norm.L2, n0=50, n=n,
                                   alpha=0.001, seed=self.seed, progress=False)
        failures = []
        for example in report.results:
            cert = example.result.certificate
            if cert is not None and not cert.radius == cert.alm == cert.base_radius:
                failures.append(f"example {example.example_id}: radius/alm/base differ")
        if any(point.acc_radius != point.acc_alm for point in report.curve):
            failures.append("accuracy curves differ")
        first = report.results[0]
        direct = certify_with_params(f, AnisoParams.isotropic(2), dataset.inputs[0], spec, Norm.L2,
                                     50, n, 0.001, first.result.seed)
        if direct != first.result:
            failures.append("isotropic parameters give a different certificate")
        detail = "; ".join(failures) or (f"{report.summary.certified_correct}/{len(report.results)} "
                                         f"certified correct, curves coincide")
        return not failures, detail, None

    def check_pattern(self) -> CheckResult:
        failures = []
        for norm in Norm:
            spec = PatternSpec(norm_p=norm, kappa=0.01, iota=0.3, height=28, width=28)
            sigma = pattern_sigma(spec)
            if sigma[14, 14] != spec.iota:
                failures.append(f"{norm.value}: center value {sigma[14, 14]}")
            a = (np.arange(28) - 14)[:, None] * np.ones((1, 28))
            b = (np.arange(28) - 14)[None, :] * np.ones((28, 1))
            length = np.linalg.norm(np.stack([a.ravel(), b.ravel()], axis=1), ord=norm.numpy_ord, axis=1)
            order = np.argsort(length, kind="stable")
            if np.any(np.diff(sigma.ravel()[order]) < -1e-12):
                failures.append(f"{norm.value}: not monotone in the pixel norm")
            normalized = pattern_sigma(spec.copy(update={"target_mean": 1.7}))
            if abs(normalized.mean() - 1.7) > 1e-9:
                failures.append(f"{norm.value}: mean {normalized.mean()} after normalization")
        return not failures, "; ".join(failures) or "center, monotonicity and normalization hold", None

    def check_analytic_smoothing(self) -> CheckResult:
        rng = self._rng(9)
        instances = self._size(5, 50)
        n = self._size(20000, 100000)
        worst = 0.0
        for _ in range(instances):
            d = int(rng.integers(1, 4))
            model = LinearModel(w=rng.standard_normal(d), b=float(rng.normal(0.0, 0.5)))
            x = rng.uniform(0.0, 1.0, d)
            params = AnisoParams(sigma=rng.uniform(0.5, 2.0, d), mu=0.2 * rng.standard_normal(d))
            lam = rng.uniform(0.5, 1.5)
            exact = analytic_gaussian_pa(model, x, params, lam)
            tally = classify_samples(LinearClassifier.from_model(model), x, params,
                                     NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=lam), n,
                                     int(rng.integers(2 ** 31)))
            frequency = tally.count(1) / n
            standard_error = max(math.sqrt(exact * (1.0 - exact) / n), 1.0 / n)
            worst = max(worst, abs(frequency - exact) / standard_error)
        return worst <= 4.0, f"largest deviation {worst:.2f} standard errors", None

    def check_anisotropic_gain(self) -> CheckResult:
        """ Pattern-wise vs isotropic certified-accuracy-vs-ALM curves

        Labels depend on the center pixel only. The pattern keeps sigma = 1 there and
        grows it elsewhere, so both campaigns see the same tallies and the pattern's
        ALM curve must dominate with a clear area gain.
        """
        rng = self._rng(10)
        width = 9
        inputs = rng.uniform(0.0, 1.0, (self._size(20, 100), width))
        center = width // 2
        dataset = Dataset(inputs=inputs, labels=(inputs[:, center] > 0.5).astype(np.int64),
                          num_classes=2, image_shape=(1, width))
        weights = np.zeros(width)
        weights[center] = 1.0
        f = LinearClassifier(weights, -0.5)
        spec = NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=0.25)
        pattern = PatternNpg(PatternSpec(norm_p=Norm.LINF, kappa=0.25, iota=1.0, height=1,
                                         width=width))
        engine = dict(n0=50, n=self._size(500, 5000), alpha=0.001, seed=self.seed, progress=False)
        candidate = evaluate_campaign(dataset, f, pattern, spec, Norm.L2, **engine)
        baseline = evaluate_campaign(dataset, f, IsotropicNpg(width), spec, Norm.L2, **engine)
        comparison = compare_curves(certified_sizes(candidate.results, use_alm=True),
                                    certified_sizes(baseline.results, use_alm=True))
        passed = comparison.dominance_fraction >= 0.8 and comparison.relative_gain >= 0.05
        return passed, (f"dominance {comparison.dominance_fraction:.2f}, "
                        f"area gain {100.0 * comparison.relative_gain:.1f}%"), None


class VerificationServiceFactory(BaseServiceFactory):
    """ Builds verification suites by name """

    __suites__ = {
        "oracle": OracleVerificationService,
    }

    @classmethod
    def create(cls, suite: str = "oracle", **kwargs) -> BaseVerificationService:
        return cls.__suites__[suite.lower()](**kwargs)

    @classmethod
    def register(cls, name: str, product, **kwargs) -> None:
        cls.__suites__[name] = product

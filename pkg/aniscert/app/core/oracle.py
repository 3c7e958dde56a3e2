""" Independent oracles for the certification engine

Catalog
1. analytic_gaussian_pa      closed-form smoothed probability of a halfspace
2. linear_flip_distance      exact distance to the smoothed decision boundary
3. grid_flip_search          brute-force search for a flip inside the certified region
4. mc_volume                 rejection-sampling volume of the certified region
5. TransformedClassifier     f'(z) = f(Sigma z + mu'), mu' = mu + x - Sigma x
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np

from .cert_math import standard_normal_cdf, region_norm
from .exceptions import DimensionMismatchError
from .smoothing import ClassifierHandle, classify_samples
from ..enums import Norm
from ..models.data_models import AnisoParams, CountTally, LinearModel, NoiseSpec, VolumeEstimate
from ..utils import make_rng

logger = logging.getLogger(__name__)

MAX_SEARCH_DIM = 3
# probabilities this close to 1/2 count as ties, not flips
TIE_TOLERANCE = 1e-9
VOLUME_CHUNK = 100000


def _margin(model: LinearModel, z: np.ndarray, params: AnisoParams) -> np.ndarray:
    return z @ model.w + params.mu @ model.w + model.b


def _noise_direction(model: LinearModel, params: AnisoParams) -> np.ndarray:
    """ Sigma^T w: the halfspace normal seen by the isotropic noise """
    if params.is_diagonal:
        return model.w * params.sigma
    return params.full_sigma.T @ model.w


def analytic_gaussian_pa(model: LinearModel, x: np.ndarray, params: AnisoParams, lam: float) -> float:
    """ P(w^T (x + Sigma eps + mu) + b > 0) for eps ~ N(0, lam^2 I) """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.d or model.w.shape[0] != params.d:
        raise DimensionMismatchError("model, input and parameters must share the dimension")
    scale = lam * np.linalg.norm(_noise_direction(model, params))
    return float(standard_normal_cdf(_margin(model, x, params) / scale))


def _dual_exponent(norm: Norm) -> float:
    return {Norm.L1: math.inf, Norm.L2: 2.0, Norm.LINF: 1.0}[norm]


def linear_flip_distance(model: LinearModel, x: np.ndarray, params: AnisoParams,
                         norm: Norm = Norm.L2) -> float:
    """ Smallest |Sigma^-1 delta|_p that moves x + delta onto the smoothed boundary

    For Gaussian smoothing of a halfspace this equals lam * Phi^-1(p_A) when
    p_A is computed analytically.
    """
    direction = _noise_direction(model, params)
    margin = abs(float(_margin(model, np.asarray(x, dtype=np.float64), params)))
    return margin / float(np.linalg.norm(direction, ord=_dual_exponent(norm)))


def _smoothed_positive(model: LinearModel, points: np.ndarray, params: AnisoParams,
                       lam: float) -> np.ndarray:
    scale = lam * np.linalg.norm(_noise_direction(model, params))
    return standard_normal_cdf(_margin(model, points, params) / scale)


def _unit_grid_slices(d: int, density: int, norm: Norm):
    """ Yields batches of unit-ball points u (|u|_p <= 1), interior grid plus sphere projections """
    axis = np.linspace(-1.0, 1.0, density)
    for first in axis:
        if d == 1:
            rest = np.array([[first]])
        else:
            mesh = np.meshgrid(*([axis] * (d - 1)), indexing="ij")
            tail = np.stack([m.ravel() for m in mesh], axis=1)
            rest = np.concatenate([np.full((tail.shape[0], 1), first), tail], axis=1)
        lengths = np.linalg.norm(rest, ord=norm.numpy_ord, axis=1)
        interior = rest[lengths <= 1.0]
        nonzero = lengths > 0
        sphere = rest[nonzero] / lengths[nonzero][:, None]
        yield np.concatenate([interior, sphere], axis=0)


def grid_flip_search(model: LinearModel, x: np.ndarray, params: AnisoParams, norm: Norm,
                     base_radius: float, grid_density: int = 41, lam: float = 1.0,
                     inflation: float = 1.0) -> Optional[np.ndarray]:
    """ Scans {delta : |Sigma^-1 delta|_p <= inflation * R} for a change of the smoothed class

    Returns:
        the flipping delta with the smallest region norm, or None.
    """
    x = np.asarray(x, dtype=np.float64)
    d = params.d
    if d > MAX_SEARCH_DIM:
        raise DimensionMismatchError(f"grid flip search is limited to d <= {MAX_SEARCH_DIM}")
    if base_radius <= 0:
        return None
    clean = _smoothed_positive(model, x[None, :], params, lam)[0]
    clean_positive = clean > 0.5
    radius = inflation * base_radius
    matrix = params.matrix()
    best, best_norm = None, math.inf
    for units in _unit_grid_slices(d, grid_density, norm):
        deltas = (units * radius) @ matrix.T
        probabilities = _smoothed_positive(model, x + deltas, params, lam)
        if clean_positive:
            flipped = probabilities < 0.5 - TIE_TOLERANCE
        else:
            flipped = probabilities > 0.5 + TIE_TOLERANCE
        if np.any(flipped):
            norms = region_norm(deltas[flipped], params, norm)
            index = int(np.argmin(norms))
            if norms[index] < best_norm:
                best, best_norm = deltas[flipped][index], float(norms[index])
    if best is not None:
        logger.debug("flip found at region norm %.6g (R=%.6g)", best_norm, base_radius)
    return best


def mc_volume(params: AnisoParams, norm_p: float, base_radius: float, d: int,
              samples: int = 1000000, seed: int = 0) -> VolumeEstimate:
    """ Hit-rate estimate of the volume of {delta : |Sigma^-1 delta|_p <= R}

    Points are drawn uniformly from the box [-R, R]^d in the whitened space and
    the hit volume is mapped back through |det Sigma|.
    """
    if params.d != d:
        raise DimensionMismatchError(f"parameters have dimension {params.d}, expected {d}")
    if d > MAX_SEARCH_DIM:
        raise DimensionMismatchError(f"volume estimates are limited to d <= {MAX_SEARCH_DIM}")
    if base_radius == 0:
        return VolumeEstimate(volume=0.0, standard_error=0.0, samples=samples)
    hits = 0
    drawn = 0
    chunk = 0
    while drawn < samples:
        size = min(VOLUME_CHUNK, samples - drawn)
        points = make_rng(seed, chunk).uniform(-1.0, 1.0, (size, d))
        if math.isinf(norm_p):
            lengths = np.max(np.abs(points), axis=1)
        else:
            lengths = np.sum(np.abs(points) ** norm_p, axis=1) ** (1.0 / norm_p)
        hits += int(np.sum(lengths <= 1.0))
        drawn += size
        chunk += 1
    box = (2.0 * base_radius) ** d * math.exp(params.log_scale_volume())
    rate = hits / samples
    return VolumeEstimate(volume=box * rate,
                          standard_error=box * math.sqrt(rate * (1.0 - rate) / samples),
                          samples=samples)


class TransformedClassifier(ClassifierHandle):
    """ f'(z) = f(Sigma z + mu') with mu' = mu + x - Sigma x

    Under isotropic noise around x, f' sees exactly the anisotropic samples
    x + Sigma eps + mu. sign_bug flips the sign of Sigma x (a deliberate defect
    used to check that the equivalence test can fail).
    """

    def __init__(self, base: ClassifierHandle, params: AnisoParams, x: np.ndarray,
                 sign_bug: bool = False) -> None:
        super().__init__(base.d, base.num_classes)
        self.base = base
        self.params = params
        x = np.asarray(x, dtype=np.float64)
        scaled_x = x * params.sigma if params.is_diagonal else params.full_sigma @ x
        self.shift = params.mu + x + scaled_x if sign_bug else params.mu + x - scaled_x

    def classify(self, inputs):
        if self.params.is_diagonal:
            return self.base.classify(inputs * self.params.sigma + self.shift)
        return self.base.classify(inputs @ self.params.full_sigma.T + self.shift)


def transformation_tallies(f: ClassifierHandle, x: np.ndarray, params: AnisoParams,
                           spec: NoiseSpec, n: int, seed: int,
                           sign_bug: bool = False) -> Tuple[CountTally, CountTally]:
    """ Tallies of f under anisotropic noise and of the transformed f under isotropic noise """
    anisotropic = classify_samples(f, x, params, spec, n, seed)
    transformed = TransformedClassifier(f, params, x, sign_bug=sign_bug)
    isotropic = classify_samples(transformed, x, AnisoParams.isotropic(params.d), spec, n, seed)
    return anisotropic, isotropic

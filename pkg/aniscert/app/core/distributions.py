""" Isotropic noise families and the anisotropic transform

Catalog
1. GaussianSampler       N(0, lambda^2) per coordinate
2. LaplaceSampler        Laplace(0, lambda) per coordinate
3. ExpLinfSampler        density ~ exp(-|z / lambda|_inf)
4. UniformLinfSampler    uniform on [-lambda, lambda]^d
5. PowerLawLinfSampler   density ~ (1 + |z|_inf / lambda)^(-a)

The two l_inf-radial families draw an l_inf radius from its one-dimensional
law and a direction by pushing a uniform cube point onto the cube surface.
"""
import logging
from abc import ABC, abstractmethod
from typing import Dict, Optional, Type

import numpy as np

from .exceptions import UnsupportedNoiseError, DimensionMismatchError
from ..enums import NoiseFamily
from ..models.data_models import NoiseSpec, AnisoParams
from ..utils import RandomState, as_rng

logger = logging.getLogger(__name__)


class BaseNoiseSampler(ABC):
    """ Defines common interface for isotropic noise samplers """

    def __init__(self, spec: NoiseSpec) -> None:
        self._spec = spec

    @property
    def scale(self) -> float:
        return self._spec.scale

    def check_dimension(self, d: int) -> None:
        if d < 1:
            raise DimensionMismatchError(f"dimension must be >= 1, got {d}")

    @abstractmethod
    def sample(self, rng: np.random.Generator, shape: tuple) -> np.ndarray:
        """ Draws i.i.d. vectors; the last axis of shape is the dimension d """
        return NotImplemented

    @abstractmethod
    def log_density(self, z: np.ndarray) -> np.ndarray:
        """ Unnormalized log-density over the last axis """
        return NotImplemented

    @abstractmethod
    def coordinate_variance(self, d: int) -> float:
        return NotImplemented


class GaussianSampler(BaseNoiseSampler):

    def sample(self, rng, shape):
        return rng.standard_normal(shape) * self.scale

    def log_density(self, z):
        return -0.5 * np.sum((z / self.scale) ** 2, axis=-1)

    def coordinate_variance(self, d):
        return self.scale ** 2


class LaplaceSampler(BaseNoiseSampler):

    def sample(self, rng, shape):
        return rng.laplace(0.0, self.scale, shape)

    def log_density(self, z):
        return -np.sum(np.abs(z), axis=-1) / self.scale

    def coordinate_variance(self, d):
        return 2.0 * self.scale ** 2


class UniformLinfSampler(BaseNoiseSampler):

    def sample(self, rng, shape):
        return rng.uniform(-self.scale, self.scale, shape)

    def log_density(self, z):
        inside = np.max(np.abs(z), axis=-1) <= self.scale
        return np.where(inside, 0.0, -np.inf)

    def coordinate_variance(self, d):
        return self.scale ** 2 / 3.0


class LinfRadialSampler(BaseNoiseSampler):
    """ Noise whose density depends on |z|_inf only

    z = r * u with u on the surface of the unit cube (cone measure) and r drawn
    from the radial law r^(d-1) * density(r).
    """

    @abstractmethod
    def sample_radius(self, rng: np.random.Generator, d: int, count: tuple) -> np.ndarray:
        return NotImplemented

    @abstractmethod
    def radius_second_moment(self, d: int) -> float:
        return NotImplemented

    def sample(self, rng, shape):
        d = shape[-1]
        self.check_dimension(d)
        cube = rng.uniform(-1.0, 1.0, shape)
        peak = np.max(np.abs(cube), axis=-1, keepdims=True)
        # a zero peak has probability zero
        direction = cube / np.where(peak > 0, peak, 1.0)
        radius = self.sample_radius(rng, d, shape[:-1])
        return direction * np.asarray(radius)[..., None]

    def coordinate_variance(self, d):
        # E[u_i^2] for the cone measure on the cube surface is (d + 2) / (3d)
        return self.radius_second_moment(d) * (d + 2) / (3.0 * d)


class ExpLinfSampler(LinfRadialSampler):

    def sample_radius(self, rng, d, count):
        return rng.gamma(shape=d, scale=self.scale, size=count)

    def log_density(self, z):
        return -np.max(np.abs(z), axis=-1) / self.scale

    def radius_second_moment(self, d):
        return self.scale ** 2 * d * (d + 1)


class PowerLawLinfSampler(LinfRadialSampler):
    """ r / lambda follows the beta-prime law with parameters (d, a - d) """

    @property
    def exponent(self) -> float:
        return self._spec.power_exponent

    def check_dimension(self, d: int) -> None:
        super().check_dimension(d)
        if not self.exponent > d:
            raise UnsupportedNoiseError(
                f"power-law noise needs exponent a > d, got a={self.exponent}, d={d}")

    def sample_radius(self, rng, d, count):
        b = rng.beta(d, self.exponent - d, size=count)
        return self.scale * b / (1.0 - b)

    def log_density(self, z):
        return -self.exponent * np.log1p(np.max(np.abs(z), axis=-1) / self.scale)

    def radius_second_moment(self, d):
        self.check_dimension(d)
        tail = self.exponent - d
        if not tail > 2:
            return np.inf
        return self.scale ** 2 * d * (d + 1) / ((tail - 1) * (tail - 2))


class NoiseSamplerFactory(object):
    """ Handles sampler creation by noise family """

    __samplers__: Dict[NoiseFamily, Type[BaseNoiseSampler]] = {
        NoiseFamily.GAUSSIAN: GaussianSampler,
        NoiseFamily.LAPLACE: LaplaceSampler,
        NoiseFamily.EXP_LINF: ExpLinfSampler,
        NoiseFamily.UNIFORM_LINF: UniformLinfSampler,
        NoiseFamily.POWER_LAW_LINF: PowerLawLinfSampler,
    }

    @classmethod
    def create(cls, spec: NoiseSpec) -> BaseNoiseSampler:
        sampler_cls = cls.__samplers__.get(spec.family)
        if sampler_cls is None:
            raise UnsupportedNoiseError(f"no sampler for noise family {spec.family}")
        return sampler_cls(spec)

    @classmethod
    def register(cls, family: NoiseFamily, sampler_cls: Type[BaseNoiseSampler]) -> None:
        cls.__samplers__[family] = sampler_cls


def sample_isotropic(spec: NoiseSpec, d: int, seed: RandomState,
                     num: Optional[int] = None) -> np.ndarray:
    """ Draws one (d,) vector, or a (num, d) batch, of isotropic noise

    Args:
        spec: NoiseSpec
        d: int, dimension
        seed: int or numpy Generator; an int always yields the same draws
        num: Optional[int], batch size
    """
    sampler = NoiseSamplerFactory.create(spec)
    sampler.check_dimension(d)
    shape = (d,) if num is None else (int(num), d)
    return sampler.sample(as_rng(seed), shape)


def to_anisotropic(eps: np.ndarray, params: AnisoParams) -> np.ndarray:
    """ eps' = Sigma eps + mu, applied row-wise to batches """
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape[-1] != params.d:
        raise DimensionMismatchError(
            f"noise has dimension {eps.shape[-1]}, parameters have {params.d}")
    if params.is_diagonal:
        return eps * params.sigma + params.mu
    return eps @ params.full_sigma.T + params.mu


def sample_anisotropic(spec: NoiseSpec, params: AnisoParams, seed: RandomState,
                       num: Optional[int] = None) -> np.ndarray:
    eps = sample_isotropic(spec, params.d, seed, num)
    return to_anisotropic(eps, params)


def coordinate_variance(spec: NoiseSpec, d: int) -> float:
    """ Per-coordinate variance of the isotropic family (inf when it does not exist) """
    sampler = NoiseSamplerFactory.create(spec)
    sampler.check_dimension(d)
    return float(sampler.coordinate_variance(d))


def unit_variance_scale(family: NoiseFamily, d: int, power_exponent: Optional[float] = None) -> float:
    """ The lambda giving unit per-coordinate variance, for comparing families at equal variance """
    reference = NoiseSpec(family=family, scale=1.0, power_exponent=power_exponent)
    variance = coordinate_variance(reference, d)
    if not np.isfinite(variance):
        raise UnsupportedNoiseError(
            f"{family.value} noise with a={power_exponent} has no finite variance at d={d}")
    return float(1.0 / np.sqrt(variance))

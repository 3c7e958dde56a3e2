""" Noise parameter generators

Catalog
1. IsotropicNpg           sigma = 1, mu = 0 (the isotropic baseline)
2. PatternNpg             closed-form spatial sigma pattern, mu = 0
3. DatasetWiseNpg         two MLPs on a constant input, one (sigma, mu) for the whole dataset
4. CertificationWiseNpg   two dense-block CNNs; mu = mu_net(x), sigma = sigma_net(x + mu)

Learned sigma goes through the positivity map sigma_floor + gamma * (tanh(z) + 1) / 2;
learned mu through gamma * tanh(z).
"""
import json
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, NamedTuple, Optional, Tuple, Type

import numpy as np

from .exceptions import MissingInputError, DimensionMismatchError, EngineParameterError, CheckpointFormatError
from .distributions import sample_isotropic
from .nn_kernel import (
    Tensor, Module, LayerFactory, ModuleFactory,
    concat, cross_entropy, logsumexp, mlp, no_grad,
    dump_modules, load_modules
)
from ..config import npg_settings
from ..enums import LayerKind, Norm, NpgKind, SigmaVariant
from ..models.data_models import AnisoParams, LayerSpec, NoiseSpec, PatternSpec
from ..utils import RandomState, as_rng

logger = logging.getLogger(__name__)


def pattern_sigma(spec: PatternSpec) -> np.ndarray:
    """ sigma(a, b) = kappa * |(a, b)|_p^2 + iota over centered pixel coordinates

    Returns:
        (height, width) map, rescaled to spec.target_mean when given.
    """
    a = (np.arange(spec.height) - spec.height // 2)[:, None].astype(np.float64)
    b = (np.arange(spec.width) - spec.width // 2)[None, :].astype(np.float64)
    if spec.norm_p == Norm.L1:
        squared_norm = (np.abs(a) + np.abs(b)) ** 2
    elif spec.norm_p == Norm.L2:
        squared_norm = a ** 2 + b ** 2
    else:
        squared_norm = np.maximum(np.abs(a), np.abs(b)) ** 2
    sigma = spec.kappa * squared_norm + spec.iota
    if spec.target_mean is not None:
        sigma = sigma * (spec.target_mean / sigma.mean())
    return sigma


def positive_sigma(raw: Tensor, gamma: float, sigma_floor: float) -> Tensor:
    return (raw.tanh() + 1.0) * (0.5 * gamma) + sigma_floor


class DenseBlockNet(Module):
    """ Dense block of same-size convolutions over the image grid

    Every conv layer sees the concatenation of the input and all earlier
    feature maps and is followed by a leaky ReLU; a final conv maps the
    concatenation back to one channel, optionally through gamma * tanh.
    Inputs and outputs are flat (N, height * width) batches.
    """
    module_name = "dense_block"

    def __init__(self, height: int, width: int, growth: int = 16, depth: int = 4,
                 kernel_size: int = 3, output_gamma: Optional[float] = None,
                 seed: RandomState = 0) -> None:
        self.height = height
        self.width = width
        self.growth = growth
        self.depth = depth
        self.kernel_size = kernel_size
        self.output_gamma = output_gamma
        rng = as_rng(seed)
        self.convs = []
        for i in range(depth):
            self.convs.append(LayerFactory.create(LayerSpec(
                kind=LayerKind.CONV2D,
                params={"in_channels": 1 + i * growth, "out_channels": growth,
                        "kernel_size": kernel_size}), rng))
        self.activation = LayerFactory.create(LayerSpec(kind=LayerKind.LEAKY_RELU))
        self.output = LayerFactory.create(LayerSpec(
            kind=LayerKind.CONV2D,
            params={"in_channels": 1 + depth * growth, "out_channels": 1,
                    "kernel_size": kernel_size}), rng)
        self.output_activation = None
        if output_gamma is not None:
            self.output_activation = LayerFactory.create(
                LayerSpec(kind=LayerKind.AMPLIFIED_TANH, gamma=output_gamma))

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "DenseBlockNet":
        return cls(**config)

    def config(self):
        return {"height": self.height, "width": self.width, "growth": self.growth,
                "depth": self.depth, "kernel_size": self.kernel_size,
                "output_gamma": self.output_gamma}

    def parameters(self):
        named = {}
        for index, conv in enumerate(self.convs):
            for name, tensor in conv.parameters().items():
                named[f"convs.{index}.{name}"] = tensor
        for name, tensor in self.output.parameters().items():
            named[f"output.{name}"] = tensor
        return named

    def __call__(self, x):
        d = self.height * self.width
        if x.ndim != 2 or x.shape[1] != d:
            raise DimensionMismatchError(f"dense block expects (N, {d}) input, got {x.shape}")
        features = [x.reshape(x.shape[0], 1, self.height, self.width)]
        for conv in self.convs:
            features.append(self.activation(conv(concat(features, axis=1))))
        out = self.output(concat(features, axis=1))
        if self.output_activation is not None:
            out = self.output_activation(out)
        return out.reshape(x.shape[0], d)


ModuleFactory.register(DenseBlockNet.module_name, DenseBlockNet)


class NpgModel(ABC):
    """ Defines common interface for noise parameter generators

    Fields:
        kind: NpgKind
        d: int, input dimension
        gamma: float, amplification
    """
    kind: NpgKind

    def __init__(self, d: int, gamma: float = 1.0,
                 sigma_floor: float = npg_settings.sigma_floor) -> None:
        if not gamma > 0:
            raise EngineParameterError(f"gamma must be > 0, got {gamma}")
        self.d = d
        self.gamma = gamma
        self.sigma_floor = sigma_floor

    @property
    def trainable(self) -> bool:
        return len(self.parameters()) > 0

    @property
    def needs_input(self) -> bool:
        return False

    def parameters(self) -> Dict[str, Tensor]:
        named = {}
        for key, module in self.modules().items():
            for name, tensor in module.parameters().items():
                named[f"{key}/{name}"] = tensor
        return named

    def modules(self) -> Dict[str, Module]:
        return {}

    def meta(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "d": self.d, "gamma": self.gamma,
                "sigma_floor": self.sigma_floor}

    @abstractmethod
    def generate_tensors(self, x: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor]:
        """ Differentiable (sigma, mu), shaped (d,) or (N, d) for a batch x """
        return NotImplemented

    def generate_params(self, x: Optional[np.ndarray] = None) -> AnisoParams:
        """ Noise parameters for one clean input x """
        if x is not None:
            x = np.asarray(x, dtype=np.float64).reshape(1, -1)
            if x.shape[1] != self.d:
                raise DimensionMismatchError(f"input has dimension {x.shape[1]}, generator expects {self.d}")
        with no_grad():
            sigma, mu = self.generate_tensors(x)
        return AnisoParams(sigma=sigma.data.reshape(-1), mu=mu.data.reshape(-1))


class IsotropicNpg(NpgModel):
    kind = NpgKind.ISOTROPIC

    def generate_tensors(self, x=None):
        return Tensor(np.ones(self.d)), Tensor(np.zeros(self.d))


class PatternNpg(NpgModel):
    kind = NpgKind.PATTERN

    def __init__(self, pattern: PatternSpec, gamma: float = 1.0,
                 sigma_floor: float = npg_settings.sigma_floor) -> None:
        super().__init__(pattern.height * pattern.width, gamma, sigma_floor)
        self.pattern = pattern
        self._sigma = pattern_sigma(pattern).reshape(-1)
        if self._sigma.min() < sigma_floor:
            raise EngineParameterError(
                f"pattern sigma {self._sigma.min():.3g} falls below the floor {sigma_floor}")

    def meta(self):
        meta = super().meta()
        meta["pattern"] = json.loads(self.pattern.json())
        return meta

    def generate_tensors(self, x=None):
        return Tensor(self._sigma), Tensor(np.zeros(self.d))


class DatasetWiseNpg(NpgModel):
    """ Input-independent generator: both nets read a fixed all-ones vector """
    kind = NpgKind.DATASET_WISE

    def __init__(self, d: int, gamma: float = npg_settings.dataset_gamma,
                 sigma_floor: float = npg_settings.sigma_floor,
                 hidden: int = npg_settings.dataset_hidden,
                 constant_length: int = npg_settings.constant_input_length,
                 seed: RandomState = 0,
                 sigma_net: Optional[Module] = None,
                 mu_net: Optional[Module] = None) -> None:
        super().__init__(d, gamma, sigma_floor)
        rng = as_rng(seed)
        sizes = [constant_length, hidden, hidden, hidden, hidden, d]
        self.sigma_net = sigma_net or mlp(sizes, rng)
        self.mu_net = mu_net or mlp(sizes, rng, output_activation=LayerSpec(
            kind=LayerKind.AMPLIFIED_TANH, gamma=gamma))
        self.constant_input = np.ones((1, constant_length))

    def modules(self):
        return {"sigma_net": self.sigma_net, "mu_net": self.mu_net}

    def meta(self):
        meta = super().meta()
        meta["constant_length"] = int(self.constant_input.shape[1])
        return meta

    def generate_tensors(self, x=None):
        constant = Tensor(self.constant_input)
        sigma = positive_sigma(self.sigma_net(constant), self.gamma, self.sigma_floor)
        mu = self.mu_net(constant)
        return sigma.reshape(self.d), mu.reshape(self.d)


class CertificationWiseNpg(NpgModel):
    """ Input-dependent generator, cascaded: mu first, then sigma on x + mu """
    kind = NpgKind.CERTIFICATION_WISE

    def __init__(self, image_shape: Tuple[int, int],
                 gamma: float = npg_settings.certification_gamma,
                 sigma_floor: float = npg_settings.sigma_floor,
                 growth: int = npg_settings.dense_block_channels,
                 depth: int = npg_settings.dense_block_depth,
                 seed: RandomState = 0,
                 sigma_net: Optional[Module] = None,
                 mu_net: Optional[Module] = None) -> None:
        height, width = image_shape
        super().__init__(height * width, gamma, sigma_floor)
        self.image_shape = (height, width)
        rng = as_rng(seed)
        self.mu_net = mu_net or DenseBlockNet(height, width, growth, depth,
                                              output_gamma=gamma, seed=rng)
        self.sigma_net = sigma_net or DenseBlockNet(height, width, growth, depth, seed=rng)

    @property
    def needs_input(self) -> bool:
        return True

    def modules(self):
        return {"sigma_net": self.sigma_net, "mu_net": self.mu_net}

    def meta(self):
        meta = super().meta()
        meta["image_shape"] = list(self.image_shape)
        return meta

    def generate_tensors(self, x=None):
        if x is None:
            raise MissingInputError("certification-wise noise parameters need the clean input x")
        inputs = Tensor(np.asarray(x, dtype=np.float64).reshape(-1, self.d))
        mu = self.mu_net(inputs)
        sigma = positive_sigma(self.sigma_net(inputs + mu), self.gamma, self.sigma_floor)
        return sigma, mu


class NpgFactory(object):
    """ Handles generator creation by kind """

    __generators__: Dict[NpgKind, Type[NpgModel]] = {
        NpgKind.ISOTROPIC: IsotropicNpg,
        NpgKind.PATTERN: PatternNpg,
        NpgKind.DATASET_WISE: DatasetWiseNpg,
        NpgKind.CERTIFICATION_WISE: CertificationWiseNpg,
    }

    @classmethod
    def create(cls, kind: NpgKind, d: int, image_shape: Optional[Tuple[int, int]] = None,
               pattern: Optional[PatternSpec] = None, gamma: Optional[float] = None,
               seed: RandomState = 0) -> NpgModel:
        if kind == NpgKind.ISOTROPIC:
            return IsotropicNpg(d)
        if kind == NpgKind.PATTERN:
            if pattern is None:
                if image_shape is None:
                    raise MissingInputError("a pattern generator needs a pattern or an image shape")
                pattern = PatternSpec(height=image_shape[0], width=image_shape[1])
            npg = PatternNpg(pattern, gamma=1.0 if gamma is None else gamma)
        elif kind == NpgKind.DATASET_WISE:
            default = npg_settings.dataset_gamma
            npg = DatasetWiseNpg(d, gamma=default if gamma is None else gamma, seed=seed)
        else:
            default = npg_settings.certification_gamma
            if image_shape is None:
                image_shape = (1, d)
            npg = CertificationWiseNpg(image_shape,
                                       gamma=default if gamma is None else gamma, seed=seed)
        if npg.d != d:
            raise DimensionMismatchError(f"{kind.value} generator has dimension {npg.d}, data has {d}")
        return npg

    @classmethod
    def from_checkpoint(cls, modules: Dict[str, Module], meta: Dict[str, Any]) -> NpgModel:
        try:
            kind = NpgKind(meta["kind"])
            d, gamma, floor = int(meta["d"]), float(meta["gamma"]), float(meta["sigma_floor"])
        except (KeyError, ValueError) as e:
            raise CheckpointFormatError(f"bad generator header: {e}")
        if kind == NpgKind.ISOTROPIC:
            return IsotropicNpg(d, gamma, floor)
        if kind == NpgKind.PATTERN:
            return PatternNpg(PatternSpec.parse_obj(meta["pattern"]), gamma, floor)
        if kind == NpgKind.DATASET_WISE:
            return DatasetWiseNpg(d, gamma, floor, constant_length=int(meta["constant_length"]),
                                  sigma_net=modules["sigma_net"], mu_net=modules["mu_net"])
        return CertificationWiseNpg(tuple(meta["image_shape"]), gamma, floor,
                                    sigma_net=modules["sigma_net"], mu_net=modules["mu_net"])

    @classmethod
    def register(cls, kind: NpgKind, generator_cls: Type[NpgModel]) -> None:
        cls.__generators__[kind] = generator_cls


def generate_params(model: NpgModel, x: Optional[np.ndarray] = None) -> AnisoParams:
    return model.generate_params(x)


def dump_npg(model: NpgModel) -> str:
    return dump_modules(model.modules(), model.meta())


def save_npg(model: NpgModel, path: str) -> None:
    with open(path, "w") as f:
        f.write(dump_npg(model))


def load_npg(path: str) -> NpgModel:
    with open(path) as f:
        modules, meta = load_modules(f.read())
    return NpgFactory.from_checkpoint(modules, meta)


class NpgLoss(NamedTuple):
    loss: float
    cross_entropy: float
    variance_term: float
    grads: Dict[str, np.ndarray]


def variance_term(sigma: Tensor, variant: SigmaVariant,
                  tau: float = npg_settings.softmin_tau) -> Tensor:
    """ Batch mean of mean(sigma) or of the soft-min -tau * log sum exp(-sigma / tau) """
    if variant == SigmaVariant.MEAN_SIGMA:
        return sigma.mean()
    soft_min = logsumexp(sigma * (-1.0 / tau), axis=-1) * (-tau)
    return soft_min.mean()


def npg_loss(model: NpgModel, classifier: Module, inputs: np.ndarray, labels: np.ndarray,
             spec: NoiseSpec, variant: SigmaVariant = SigmaVariant.MEAN_SIGMA,
             seed: RandomState = 0, smoothing_weight: float = 1.0,
             tau: float = npg_settings.softmin_tau) -> NpgLoss:
    """ Joint loss -variance(sigma) + smoothing_weight * CE(f(x + eps * sigma + mu), y)

    One isotropic noise draw per example. Generators without trainable
    parameters contribute no variance term. Gradients are keyed
    "classifier/<name>" and "npg/<name>".
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise EngineParameterError("npg_loss needs a nonempty (N, d) batch")
    eps = sample_isotropic(spec, inputs.shape[1], seed, num=inputs.shape[0])

    classifier.zero_grad()
    for tensor in model.parameters().values():
        tensor.zero_grad()

    sigma, mu = model.generate_tensors(inputs if model.needs_input else None)
    noisy = Tensor(inputs) + sigma * eps + mu
    smoothing = cross_entropy(classifier(noisy), labels)
    loss = smoothing * smoothing_weight
    spread = 0.0
    if model.trainable:
        term = variance_term(sigma, variant, tau)
        spread = float(term.data)
        loss = loss - term
    if loss.requires_grad:
        loss.backward()

    grads = {}
    for name, tensor in classifier.parameters().items():
        grads[f"classifier/{name}"] = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
    for name, tensor in model.parameters().items():
        grads[f"npg/{name}"] = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
    return NpgLoss(loss=float(loss.data), cross_entropy=float(smoothing.data),
                   variance_term=spread, grads=grads)

import math
import os
from typing import List, Optional, Union

from pydantic import BaseModel, Field, validator

from ..data_models import NoiseSpec, PatternSpec
from ...config import engine_settings, training_settings
from ...enums import ClassifierKind, DatasetSource, NoiseFamily, Norm, NpgKind, SigmaVariant


def _existing_path(value, field):
    if value is not None and not os.path.exists(value):
        raise ValueError(f"{field.name} file '{value}' does not exist")
    return value


class CampaignConfig(BaseModel):
    """ Describes one train / certify / predict run

    Read from flat ``key = value`` files; every field name is a key.

    Fields:
        dataset: DatasetSource, mnist needs images and labels
        images, labels: Optional[str], IDX files
        downscale: Optional[int], average-pooling factor for images
        synthetic_*: shape of the synthetic Gaussian blobs
        noise, scale (key "lambda"), power_exponent: the isotropic base noise
        norm: Norm, threat model
        classifier: ClassifierKind, nn or linear (synthetic only)
        hidden: List[int], hidden widths of the nn classifier
        model, npg_checkpoint: Optional[str], checkpoints read by certify / predict
        npg, gamma, variant, pattern_*: the noise parameter generator
        n0, n, alpha, chunk_size, workers: engine parameters
        seed: int
        max_examples: Optional[int]
        output: str, output directory
        epochs, lr, batch_size, checkpoint_every, smoothing_weight, holdout: training
    """
    dataset: DatasetSource = DatasetSource.SYNTHETIC
    images: Optional[str] = None
    labels: Optional[str] = None
    downscale: Optional[int] = None

    synthetic_d: int = 2
    synthetic_classes: int = 2
    synthetic_per_class: int = 100
    synthetic_separation: float = 10.0

    noise: NoiseFamily = NoiseFamily.GAUSSIAN
    scale: float = Field(1.0, alias="lambda")
    power_exponent: Optional[float] = None
    norm: Norm = Norm.L2

    classifier: ClassifierKind = ClassifierKind.NN
    hidden: List[int] = [64]
    model: Optional[str] = None

    npg: NpgKind = NpgKind.ISOTROPIC
    npg_checkpoint: Optional[str] = None
    gamma: Optional[float] = None
    variant: SigmaVariant = SigmaVariant.MEAN_SIGMA
    pattern_p: Norm = Norm.L2
    pattern_kappa: float = 0.0
    pattern_iota: float = 1.0
    pattern_target_mean: Optional[float] = None

    n0: int = engine_settings.n0
    n: int = engine_settings.n
    alpha: float = engine_settings.alpha
    chunk_size: int = engine_settings.chunk_size
    workers: int = engine_settings.workers
    seed: int = 0
    max_examples: Optional[int] = None
    output: str = "aniscert_out"

    epochs: int = training_settings.epochs
    lr: float = training_settings.lr
    batch_size: int = training_settings.batch_size
    checkpoint_every: int = training_settings.checkpoint_every
    smoothing_weight: float = 1.0
    holdout: float = 0.2

    class Config:
        allow_population_by_field_name = True
        extra = "forbid"

    @validator("images", "labels", always=True)
    def mnist_files(cls, value, values, field):
        if values.get("dataset") == DatasetSource.MNIST and value is None:
            raise ValueError(f"the mnist dataset needs the {field.name} path")
        return _existing_path(value, field)

    @validator("model", "npg_checkpoint")
    def checkpoint_exists(cls, value, field):
        return _existing_path(value, field)

    @validator("hidden", pre=True)
    def comma_separated(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @validator("downscale", "synthetic_d", "synthetic_per_class", "n0", "n", "chunk_size",
               "workers", "epochs", "batch_size", "checkpoint_every")
    def at_least_one(cls, value, field):
        if value is not None and value < 1:
            raise ValueError(f"{field.name} must be >= 1")
        return value

    @validator("synthetic_classes")
    def at_least_two_classes(cls, value):
        if value < 2:
            raise ValueError("need at least two classes")
        return value

    @validator("max_examples")
    def nonnegative(cls, value):
        if value is not None and value < 0:
            raise ValueError("max_examples must be >= 0")
        return value

    @validator("scale", "synthetic_separation", "lr", "pattern_iota")
    def positive(cls, value, field):
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"{field.name} must be a positive finite real")
        return value

    @validator("gamma", "pattern_target_mean", "power_exponent")
    def positive_if_given(cls, value, field):
        if value is not None and not value > 0:
            raise ValueError(f"{field.name} must be > 0")
        return value

    @validator("pattern_kappa", "smoothing_weight")
    def nonnegative_real(cls, value, field):
        if not value >= 0:
            raise ValueError(f"{field.name} must be >= 0")
        return value

    @validator("alpha")
    def open_unit_interval(cls, value):
        if not 0.0 < value < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        return value

    @validator("holdout")
    def holdout_fraction(cls, value):
        if not 0.0 <= value < 1.0:
            raise ValueError("holdout must lie in [0, 1)")
        return value

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(family=self.noise, scale=self.scale, power_exponent=self.power_exponent)

    def pattern_spec(self, height: int, width: int) -> PatternSpec:
        return PatternSpec(norm_p=self.pattern_p, kappa=self.pattern_kappa, iota=self.pattern_iota,
                           height=height, width=width, target_mean=self.pattern_target_mean)


class ClassifierRequest(BaseModel):
    """ A linear or lookup classifier handle sent over the wire

    Fields:
        kind: ClassifierKind, linear or lookup
        weights: vector (binary halfspace) or class-by-dimension matrix
        bias: float or per-class vector
        table: nested class-index table on a uniform grid over [low, high]^d
        num_classes: int, lookup only
    """
    kind: ClassifierKind = ClassifierKind.LINEAR
    weights: Optional[Union[List[float], List[List[float]]]] = None
    bias: Union[float, List[float]] = 0.0
    table: Optional[Union[int, List]] = None
    num_classes: int = 2
    low: float = 0.0
    high: float = 1.0


class PredictRequest(BaseModel):
    """ One input to smooth

    Noise parameters are sigma/mu when given, else the pattern, else isotropic.
    """
    x: List[float]
    noise: NoiseSpec
    classifier: ClassifierRequest
    sigma: Optional[List[float]] = None
    mu: Optional[List[float]] = None
    pattern: Optional[PatternSpec] = None
    n: int = 1000
    alpha: float = engine_settings.alpha
    seed: int = 0


class CertifyRequest(PredictRequest):
    norm: Norm = Norm.L2
    n0: int = engine_settings.n0

""" Builds datasets, classifiers and generators from a CampaignConfig """
import logging
import os
from typing import Tuple

import numpy as np

from ..core.exceptions import ConfigError
from ..core.nn_kernel import Module, load_model, mlp
from ..core.npg import NpgFactory, NpgModel, load_npg
from ..core.smoothing import ClassifierFactory, ClassifierHandle
from ..data_io import diagonal_boundary, load_idx, synth_gaussians
from ..enums import ClassifierKind, DatasetSource, NpgKind
from ..models.data_models import Dataset
from ..models.request_models import CampaignConfig
from ..utils import make_rng, derive_seed, TRAINING_STREAM, INIT_STREAM

logger = logging.getLogger(__name__)

CLASSIFIER_CHECKPOINT = "classifier.ckpt"
NPG_CHECKPOINT = "npg.ckpt"


def load_dataset(config: CampaignConfig) -> Dataset:
    if config.dataset == DatasetSource.MNIST:
        return load_idx(config.images, config.labels, downscale_factor=config.downscale)
    return synth_gaussians(config.synthetic_d, config.synthetic_classes,
                           config.synthetic_per_class, config.synthetic_separation, config.seed)


def split_dataset(dataset: Dataset, holdout: float, seed: int) -> Tuple[Dataset, Dataset]:
    """ (train, held-out) split by a seeded permutation; held-out is empty when holdout = 0 """
    order = make_rng(seed, TRAINING_STREAM).permutation(len(dataset))
    cut = len(dataset) - int(round(holdout * len(dataset)))
    return dataset.subset(np.sort(order[:cut])), dataset.subset(np.sort(order[cut:]))


def evaluation_split(config: CampaignConfig, dataset: Dataset) -> Dataset:
    """ The examples a campaign certifies: the held-out split, or everything when holdout = 0 """
    if config.holdout == 0:
        return dataset
    return split_dataset(dataset, config.holdout, config.seed)[1]


def image_shape(dataset: Dataset) -> Tuple[int, int]:
    return dataset.image_shape or (1, dataset.d)


def new_classifier_model(config: CampaignConfig, dataset: Dataset) -> Module:
    sizes = [dataset.d, *config.hidden, dataset.num_classes]
    return mlp(sizes, seed=derive_seed(config.seed, INIT_STREAM, 0))


def new_npg(config: CampaignConfig, dataset: Dataset) -> NpgModel:
    shape = image_shape(dataset)
    pattern = config.pattern_spec(*shape) if config.npg == NpgKind.PATTERN else None
    return NpgFactory.create(config.npg, dataset.d, image_shape=shape, pattern=pattern,
                             gamma=config.gamma, seed=derive_seed(config.seed, INIT_STREAM, 1))


def classifier_handle(config: CampaignConfig, dataset: Dataset) -> ClassifierHandle:
    """ The base classifier a campaign smooths """
    if config.classifier == ClassifierKind.LINEAR:
        if config.dataset != DatasetSource.SYNTHETIC or dataset.num_classes != 2:
            raise ConfigError("the linear classifier needs two-class synthetic data", key="classifier")
        w, b = diagonal_boundary(dataset.d, dataset.num_classes)
        return ClassifierFactory.create(ClassifierKind.LINEAR, weights=w, bias=b)
    if config.classifier != ClassifierKind.NN:
        raise ConfigError(f"campaigns cannot build a {config.classifier.value} classifier",
                          key="classifier")
    if config.model is None:
        raise ConfigError("the nn classifier needs a model checkpoint", key="model")
    model, meta = load_model(config.model)
    num_classes = int(meta.get("num_classes", dataset.num_classes))
    return ClassifierFactory.create(ClassifierKind.NN, model=model, d=dataset.d,
                                    num_classes=num_classes)


def campaign_npg(config: CampaignConfig, dataset: Dataset) -> NpgModel:
    """ The trained generator when a checkpoint is given, otherwise a fresh one """
    if config.npg_checkpoint is not None:
        npg = load_npg(config.npg_checkpoint)
        if npg.d != dataset.d:
            raise ConfigError(f"generator dimension {npg.d} does not match the data ({dataset.d})",
                              key="npg_checkpoint")
        return npg
    npg = new_npg(config, dataset)
    if npg.trainable:
        logger.warning("certifying with an untrained %s generator", npg.kind.value)
    return npg


def output_path(config: CampaignConfig, name: str) -> str:
    os.makedirs(config.output, exist_ok=True)
    return os.path.join(config.output, name)

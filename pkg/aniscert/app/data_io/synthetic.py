import logging

import numpy as np

from ..core.exceptions import EngineParameterError
from ..models.data_models import Dataset
from ..utils import make_rng

logger = logging.getLogger(__name__)


def synth_gaussians(d: int, num_classes: int, per_class: int, separation: float,
                    seed: int = 0) -> Dataset:
    """ Class-conditional Gaussian blobs in [0, 1]^d

    Class means sit on the main diagonal between 0.2 and 0.8; the common
    per-coordinate std is the distance between neighbouring means divided by
    separation, so separation counts standard deviations between neighbours.
    Samples are clipped to [0, 1] and shuffled.
    """
    if per_class < 1:
        raise EngineParameterError(f"per_class must be >= 1, got {per_class}")
    if not separation > 0:
        raise EngineParameterError(f"separation must be > 0, got {separation}")
    if d < 1 or num_classes < 2:
        raise EngineParameterError("need d >= 1 and at least two classes")

    rng = make_rng(seed)
    levels = np.linspace(0.2, 0.8, num_classes)
    spacing = (levels[1] - levels[0]) * np.sqrt(d)
    std = spacing / separation
    inputs = np.concatenate([level + std * rng.standard_normal((per_class, d)) for level in levels])
    labels = np.repeat(np.arange(num_classes), per_class)
    order = rng.permutation(labels.shape[0])
    logger.debug("synthetic blobs: d=%d, classes=%d, std=%.4f", d, num_classes, std)
    return Dataset(inputs=np.clip(inputs[order], 0.0, 1.0), labels=labels[order],
                   num_classes=num_classes)


def diagonal_boundary(d: int, num_classes: int = 2):
    """ (w, b) of the halfspace separating the first two synthetic classes """
    levels = np.linspace(0.2, 0.8, num_classes)
    midpoint = 0.5 * (levels[0] + levels[1])
    return np.ones(d), -midpoint * d

import os

os.environ.setdefault("APP_ENV", "test")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from aniscert.app.core.smoothing import LinearClassifier  # noqa: E402
from aniscert.app.data_io import diagonal_boundary, synth_gaussians  # noqa: E402
from aniscert.app.enums import NoiseFamily  # noqa: E402
from aniscert.app.models.data_models import AnisoParams, NoiseSpec  # noqa: E402


@pytest.fixture
def gaussian():
    return NoiseSpec(family=NoiseFamily.GAUSSIAN, scale=0.5)


@pytest.fixture
def blobs():
    """ Two well separated classes in [0, 1]^2 """
    return synth_gaussians(2, 2, 20, 8.0, seed=3)


@pytest.fixture
def boundary_classifier():
    w, b = diagonal_boundary(2)
    return LinearClassifier(w, b)


@pytest.fixture
def aniso_params():
    return AnisoParams(sigma=np.array([0.5, 2.0]), mu=np.array([0.1, -0.05]))

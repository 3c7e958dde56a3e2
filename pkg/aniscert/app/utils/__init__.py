from .seeding import (
    make_rng, as_rng, derive_seed, RandomState,
    SELECTION_STREAM, ESTIMATION_STREAM, PREDICTION_STREAM,
    TRAINING_STREAM, INIT_STREAM, EXAMPLE_STREAM
)
from .timer import timeit, Stopwatch

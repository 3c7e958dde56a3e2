""" Counter-based random streams

Every draw in the engine comes from a ``numpy.random.Generator`` over the
Philox bit generator, keyed by a master seed and a tuple of stream ids.
Nothing here touches global random state.
"""
from typing import Union

import numpy as np

RandomState = Union[int, np.random.Generator]

# stream ids
SELECTION_STREAM = 0
ESTIMATION_STREAM = 1
PREDICTION_STREAM = 2
TRAINING_STREAM = 3
INIT_STREAM = 4
EXAMPLE_STREAM = 5


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """ Returns an independent generator for (seed, stream...) """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(sequence))


def as_rng(seed: RandomState) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(int(seed))


def derive_seed(seed: int, *stream: int) -> int:
    """ Derives a child integer seed, used to hand per-example seeds around """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])

import logging
import time
from functools import wraps

logger = logging.getLogger(__name__)


def timeit(func):
    """ Timing decorator, logs the wall time of every call """
    @wraps(func)
    def helper(*args, **params):
        start = time.perf_counter()
        result = func(*args, **params)
        logger.debug("%s took %.3fs", func.__name__, time.perf_counter() - start)
        return result

    return helper


class Stopwatch:
    """ Context manager measuring elapsed seconds """

    def __enter__(self) -> "Stopwatch":
        self._start = time.perf_counter()
        self.seconds = 0.0
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.seconds = time.perf_counter() - self._start

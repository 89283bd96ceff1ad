"""Seeded Monte Carlo trials.

Trial i always draws from the stream derived from (seed, i), so results do
not depend on how trials are split across workers.
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from itertools import repeat
from typing import Callable, TypeVar

import numpy as np

from .errors import ParameterRangeError

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_CHUNK = 1000


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    if seed < 0 or trial < 0:
        raise ParameterRangeError("seed and trial index must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def default_workers() -> int:
    return os.cpu_count() or 1


def _run_chunk(fn: Callable[[np.random.Generator], T], seed: int, start: int, stop: int) -> list[T]:
    return [fn(trial_rng(seed, i)) for i in range(start, stop)]


def map_trials(fn: Callable[[np.random.Generator], T], seed: int, trials: int,
               workers: int = 1, chunk_size: int = DEFAULT_CHUNK) -> list[T]:
    """Run `fn` once per trial and return results in trial order.

    `fn` must be picklable when workers > 1 (a module-level function or a
    functools.partial of one).
    """
    if trials < 0:
        raise ParameterRangeError(f"trial count {trials} is negative")
    bounds = [(s, min(s + chunk_size, trials)) for s in range(0, trials, chunk_size)]
    if workers <= 1 or len(bounds) <= 1:
        chunks = [_run_chunk(fn, seed, a, b) for a, b in bounds]
    else:
        logger.debug("running %d trials on %d workers", trials, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, repeat(fn), repeat(seed),
                                   [a for a, _ in bounds], [b for _, b in bounds]))
    return [r for chunk in chunks for r in chunk]

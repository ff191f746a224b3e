"""Order-preserving parallel map capped by ``LOCALSIEVE_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional

import numpy as np

ENV_THREADS = "LOCALSIEVE_THREADS"


def thread_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    raw = os.environ.get(ENV_THREADS, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def pmap(func: Callable, items: Iterable, threads: Optional[int] = None) -> List:
    """``[func(x) for x in items]``, possibly on several threads; results keep input order."""
    items = list(items)
    n = thread_count(threads)
    if n <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(func, items))


def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """Generator for one trial, independent of how trials are scheduled."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), int(stream)]))


def trial_seed(seed: int, trial: int, stream: int = 0) -> int:
    return int(np.random.SeedSequence([int(seed), int(trial), int(stream)]).generate_state(1)[0])

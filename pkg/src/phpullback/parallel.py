"""Order-preserving map over clouds, optionally on a process pool."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial

THREADS_ENV = "PHPULLBACK_THREADS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def ordered_map(fn, items, workers=None, **kwargs):
    """[fn(x, **kwargs) for x in items], results in input order."""
    items = list(items)
    workers = default_workers() if workers is None else workers
    f = partial(fn, **kwargs) if kwargs else fn
    if workers <= 1 or len(items) <= 1:
        return [f(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(f, items))

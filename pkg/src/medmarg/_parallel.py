"""Order-preserving parallel map. Results never depend on the worker count."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

ENV_CAP = "MEDMARG_THREADS"


def effective_jobs(n_jobs=1):
    if n_jobs is None:
        n_jobs = 1
    n_jobs = int(n_jobs)
    if n_jobs < 0:
        n_jobs = os.cpu_count() or 1
    n_jobs = max(n_jobs, 1)
    cap = os.environ.get(ENV_CAP)
    if cap:
        try:
            n_jobs = min(n_jobs, max(int(cap), 1))
        except ValueError:
            pass
    return n_jobs


def parallel_map(func, items, n_jobs=1):
    """``[func(i) for i in items]``, fanned out to worker processes when ``n_jobs > 1``."""
    items = list(items)
    n_jobs = effective_jobs(n_jobs)
    if n_jobs <= 1 or len(items) <= 1:
        return [func(i) for i in items]
    chunksize = max(1, len(items) // (4 * n_jobs))
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(func, items, chunksize=chunksize))

"""Deterministic process-pool map for ensemble work.

Results are returned in input order regardless of completion order, so
the degree of parallelism never changes any reduced quantity.
"""

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def parallel_map(fn, items, workers: int = 1) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))

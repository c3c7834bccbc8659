"""Ordered fan-out over a thread pool sized by ``KFPLAB_WORKERS``."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    try:
        n = int(os.environ.get("KFPLAB_WORKERS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def map_ordered(fn, items):
    """Apply fn to every item; results come back in input order."""
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))

"""Order-preserving worker pool sized by ``CAFFINE_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import InvalidInput


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    raw = os.environ.get("CAFFINE_THREADS")
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise InvalidInput(f"CAFFINE_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise InvalidInput(f"CAFFINE_THREADS must be a positive integer, got {raw!r}")
    return value


def map_ordered(fn, items: list, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, possibly on threads; result order is fixed."""
    count = worker_count(workers)
    if count == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(count, len(items))) as pool:
        return list(pool.map(fn, items))

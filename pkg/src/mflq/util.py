"""Small shared utilities: thread-capped map."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    """Worker cap from the MFLQ_THREADS environment variable (default 1)."""
    raw = os.environ.get("MFLQ_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Map preserving order; uses threads only when MFLQ_THREADS > 1.

    Each item's computation must be pure, so threaded and sequential
    execution produce identical results.
    """
    items = list(items)
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))

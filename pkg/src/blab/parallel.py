"""Fixed-chunk fan-out.  Chunk boundaries never depend on the pool size, so
results are bitwise identical for any thread count."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    env = os.environ.get("BLAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def map_chunks(fn, n_items: int, chunk: int, threads: int = 1):
    """Call ``fn(start, stop)`` on consecutive ranges and return results in order."""
    bounds = [(s, min(s + chunk, n_items)) for s in range(0, n_items, chunk)]
    if threads <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))

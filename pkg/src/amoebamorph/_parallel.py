"""Chunked thread-pool execution for nogil kernels.

Every chunk writes a disjoint output slot, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_threads = 1


def set_threads(n: int) -> None:
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_threads() -> int:
    return _threads


def chunk_bounds(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(s, min(s + chunk, n)) for s in range(0, n, chunk)]


def run_chunks(fn, bounds, threads: int | None = None) -> list:
    """Apply ``fn(start, stop)`` to each chunk; results come back in chunk order."""
    threads = threads or _threads
    if threads <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=min(threads, len(bounds))) as ex:
        return list(ex.map(lambda ab: fn(*ab), bounds))


set_threads(int(os.environ.get("AMOEBAMORPH_THREADS", "1")))

"""Worker-count policy for batched solves.

Batches are split into contiguous chunks, each handled by a GIL-free kernel
call on its own thread. Every signal is solved by the same code regardless of
chunking, so results do not depend on the worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

# Below this many scalar samples a batch is solved inline.
_MIN_WORK_PER_THREAD = 16384


def max_workers() -> int:
    """Worker cap from ``TVPROX_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("TVPROX_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def run_chunked(fn, n_items: int, work_per_item: int, workers: int | None = None):
    """Call ``fn(start, stop)`` over contiguous chunks of ``range(n_items)``."""
    if n_items == 0:
        return
    if workers is None:
        workers = max_workers()
    by_work = max(1, (n_items * max(work_per_item, 1)) // _MIN_WORK_PER_THREAD)
    workers = max(1, min(workers, n_items, by_work))
    if workers == 1:
        fn(0, n_items)
        return
    bounds = [n_items * i // workers for i in range(workers + 1)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
        for f in futures:
            f.result()

"""Ordered chunked execution over a worker pool."""

from __future__ import annotations

import os
from typing import Any, Callable, List, Sequence, Tuple

from joblib import Parallel, delayed
from tqdm import tqdm

# chunks per worker; more chunks give smoother progress without changing results
_CHUNKS_PER_WORKER = 4


def available_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def chunk_ranges(start: int, stop: int, workers: int) -> List[Tuple[int, int]]:
    """Split [start, stop) into contiguous ranges, in order."""
    total = stop - start
    if total <= 0:
        return []
    n_chunks = min(total, max(1, int(workers)) * _CHUNKS_PER_WORKER)
    base, extra = divmod(total, n_chunks)
    ranges = []
    lo = start
    for i in range(n_chunks):
        hi = lo + base + (1 if i < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


def run_chunks(
    func: Callable[..., Any],
    arg_list: Sequence[tuple],
    workers: int = 1,
    progress: bool = False,
    desc: str = "",
) -> List[Any]:
    """
    Apply `func(*args)` to every tuple in `arg_list` and return results in
    input order, whatever the worker count.
    """
    bar = tqdm(total=len(arg_list), desc=desc, unit="chunk", disable=not progress)
    results: List[Any] = []
    try:
        if int(workers) <= 1 or len(arg_list) <= 1:
            for args in arg_list:
                results.append(func(*args))
                bar.update(1)
        else:
            pool = Parallel(n_jobs=int(workers), return_as="generator")
            for result in pool(delayed(func)(*args) for args in arg_list):
                results.append(result)
                bar.update(1)
    finally:
        bar.close()
    return results

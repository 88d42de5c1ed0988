"""Job pool for independent physics evaluations.

Jobs are pure functions.  BLAS is pinned to one thread inside the pool and
results are returned in submission order, so output does not depend on the
number of workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

from threadpoolctl import threadpool_limits

__all__ = ["ENV_VAR", "thread_count", "pmap", "single_blas_thread"]

ENV_VAR = "TOPOCURRENT_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def thread_count(default: int | None = None) -> int:
    """Worker count: ``TOPOCURRENT_THREADS`` if set, else the CPU count."""
    raw = os.environ.get(ENV_VAR)
    if raw is None or raw.strip() == "":
        return max(1, default if default is not None else (os.cpu_count() or 1))
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return n


def single_blas_thread():
    """Context manager pinning BLAS/LAPACK to one thread.

    Multithreaded BLAS reductions may sum in a different order from run to
    run; one thread keeps every float reproducible.
    """
    return threadpool_limits(limits=1)


def pmap(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """``[fn(x) for x in items]`` on a thread pool, results in input order."""
    items: Sequence[T] = list(items)
    n = min(workers or thread_count(), max(len(items), 1))
    with single_blas_thread():
        if n <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=n) as pool:
            return list(pool.map(fn, items))

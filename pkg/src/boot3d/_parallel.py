"""Order-preserving thread pool helpers."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import InvalidConfigError

ENV_THREADS = "BOOT3D_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get(ENV_THREADS, "1")
        try:
            threads = int(raw)
        except ValueError:
            raise InvalidConfigError(f"{ENV_THREADS}={raw!r} is not an integer") from None
    if threads < 1:
        raise InvalidConfigError(f"thread count must be >= 1, got {threads}")
    return threads


def parallel_map(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool; output order matches input."""
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))

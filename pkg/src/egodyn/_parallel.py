from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Order-preserving map over a bounded process pool.

    ``fn`` must be picklable. Results come back in input order, so callers get
    identical output for any ``workers``.
    """
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunksize = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


def chunked(items: list[T], n_chunks: int) -> list[list[T]]:
    n_chunks = max(1, min(n_chunks, len(items)))
    size, extra = divmod(len(items), n_chunks)
    out, pos = [], 0
    for k in range(n_chunks):
        step = size + (1 if k < extra else 0)
        out.append(items[pos:pos + step])
        pos += step
    return out

"""Schedule-independent chunked evaluation.

Work is cut into fixed-size index ranges whose boundaries never depend on the
thread count, and results are reassembled in index order.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 8192
_threads = 1


def set_threads(n: int) -> None:
    global _threads
    if int(n) < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_threads() -> int:
    return _threads


def map_ranges(fn, start: int, stop: int, threads: int = None, chunk: int = CHUNK) -> np.ndarray:
    """Concatenate ``fn(a, b)`` over ``[start, stop)`` split at multiples of ``chunk``."""
    threads = _threads if threads is None else threads
    bounds = []
    a = start
    while a < stop:
        b = min((a // chunk + 1) * chunk, stop)
        bounds.append((a, b))
        a = b
    if not bounds:
        return np.empty(0)
    if threads == 1 or len(bounds) == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    return np.concatenate(parts)

"""
Per-batch parallelism. Each batch element is computed by the same code path whatever
the worker count, so results are bit-identical across DCE_THREADS settings.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional

import numpy as np

from config.config import DCE_THREADS

_worker_count = max(1, DCE_THREADS)
_executor: Optional[ThreadPoolExecutor] = None


def get_worker_count() -> int:
    return _worker_count


def set_worker_count(count: int) -> None:
    """Change the worker cap (the pool is rebuilt lazily)"""
    global _worker_count, _executor
    count = max(1, int(count))
    if count != _worker_count and _executor is not None:
        _executor.shutdown(wait=True)
        _executor = None
    _worker_count = count


def _get_executor() -> ThreadPoolExecutor:
    global _executor
    if _executor is None:
        _executor = ThreadPoolExecutor(max_workers=_worker_count, thread_name_prefix="dce")
    return _executor


def map_batch(fn: Callable[[int], np.ndarray], count: int) -> List[np.ndarray]:
    """Evaluate fn(0..count-1), in parallel when allowed, returning results in index order"""
    if _worker_count <= 1 or count <= 1:
        return [fn(index) for index in range(count)]
    return list(_get_executor().map(fn, range(count)))


def stack_batch(fn: Callable[[int], np.ndarray], count: int) -> np.ndarray:
    return np.stack(map_batch(fn, count), axis=0)


def sum_batch(fn: Callable[[int], np.ndarray], count: int) -> np.ndarray:
    """Sum per-element partial results in fixed index order"""
    partials = map_batch(fn, count)
    total = partials[0].copy()
    for partial in partials[1:]:
        total += partial
    return total

"""
Parallel campaigns over independent work items (trajectory pairs, K-sweeps, per-block maps)
Results come back in input order, so reductions over them are deterministic.
"""

import concurrent.futures
import logging
import time
from typing import Callable, Iterable, List, Optional

from config import DEFAULT_WORKERS

logger = logging.getLogger(__name__)


def run_parallel(fn: Callable, items: Iterable, workers: Optional[int] = None, label: str = "campaign") -> List:
    """Map fn over items on a thread pool; exceptions propagate from the first failing item"""
    items = list(items)
    workers = workers or DEFAULT_WORKERS
    start_time = time.time()

    if workers == 1 or len(items) <= 1:
        results = [fn(item) for item in items]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(fn, items))

    elapsed = time.time() - start_time
    logger.info(f"⏱️  [TIMING] {label}: {len(items)} items in {elapsed:.2f}s ({workers} workers)")
    return results


def run_pair(first: Callable, second: Callable) -> tuple:
    """Run two independent computations concurrently and join"""
    with concurrent.futures.ThreadPoolExecutor(max_workers=2) as executor:
        a = executor.submit(first)
        b = executor.submit(second)
        return a.result(), b.result()

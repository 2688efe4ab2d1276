"""Opt-in threading for sitewise kernels, gated by MAGDIRAC_THREADS.

Row blocks are computed by the same vectorized kernel and written to
disjoint output slices; reductions never happen inside workers, so results
are bit-identical for every thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def thread_count() -> int:
    try:
        n = int(os.environ.get("MAGDIRAC_THREADS", "1"))
    except ValueError:
        return 1
    return max(1, n)


def apply_rows(kernel, out: np.ndarray, *arrays: np.ndarray) -> np.ndarray:
    """out[rows] = kernel(*arrays[rows]) over row blocks, threaded if requested."""
    n = thread_count()
    rows = out.shape[0]
    if n <= 1 or rows < 2 * n:
        out[...] = kernel(*arrays)
        return out
    bounds = np.linspace(0, rows, n + 1, dtype=int)

    def work(lo, hi):
        out[lo:hi] = kernel(*(a[lo:hi] for a in arrays))

    with ThreadPoolExecutor(max_workers=n) as pool:
        futs = [pool.submit(work, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        for f in futs:
            f.result()
    return out

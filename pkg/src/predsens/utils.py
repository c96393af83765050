"""Small shared helpers."""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def derive_seed(master, *path):
    """Independent child seed for the stream identified by ``path``."""
    entropy = [int(master)] + [int(p) for p in path]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


THREADS_ENV = "PREDSENS_THREADS"


def default_workers():
    """Worker count from ``PREDSENS_THREADS`` (1 when unset or invalid)."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn, items, workers=None):
    """``[fn(item) for item in items]``, on a thread pool when ``workers > 1``.

    Results keep the input order. Only worth it for callables that spend
    their time in the compiled kernels, which release the GIL.
    """
    items = list(items)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))

"""Counter-based random streams and deterministic replica execution.

Every replica draws from ``Philox`` keyed by ``(seed, replica index)``, so a
replica's numbers depend only on that pair and never on scheduling. Results
are always reassembled in replica order.
"""
from concurrent.futures import ProcessPoolExecutor
import math

import numpy as np

MASK64 = (1 << 64) - 1
DEFAULT_CHUNK = 50_000


def stream(seed, replica=0):
    """Generator for replica ``replica`` of experiment ``seed``."""
    key = np.array([int(seed) & MASK64, int(replica) & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def chunk_sizes(n_samples, chunk=DEFAULT_CHUNK):
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    n_chunks = math.ceil(n_samples / chunk)
    return [min(chunk, n_samples - i * chunk) for i in range(n_chunks)]


def _run_one(args):
    fn, seed, replica, count = args
    return fn(stream(seed, replica), count)


def replicate(fn, n_samples, seed, chunk=DEFAULT_CHUNK, workers=1):
    """Concatenate ``fn(generator, count)`` over replica chunks.

    ``fn`` must be picklable when ``workers > 1``. Output is identical for
    any number of workers.
    """
    jobs = [(fn, seed, i, c) for i, c in enumerate(chunk_sizes(n_samples, chunk))]
    if workers <= 1 or len(jobs) == 1:
        parts = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_one, jobs))
    return np.concatenate(parts)

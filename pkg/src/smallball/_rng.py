"""Deterministic random-stream plumbing.

Every stochastic routine derives its generators from a user seed through
``stream(seed, domain, chunk)``.  Work is split into chunks of whole sample
rows; chunk c always consumes stream (seed, domain, c) regardless of how many
workers execute the chunks, so results are bitwise reproducible across worker
counts.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_SEED = 20090520

# domain tags; keep stable forever, appending only
DOMAIN_PATHS = 1
DOMAIN_STABLE = 2
DOMAIN_MC = 3
DOMAIN_QUANT = 4
DOMAIN_CHENLI_LHS = 5
DOMAIN_CHENLI_RHS = 6


def stream(seed: int, domain: int, chunk: int) -> np.random.Generator:
    """Independent generator for one (domain, chunk) cell of a run."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(domain), int(chunk)))
    return np.random.default_rng(ss)


def chunk_rows(n_cols: int, total_rows: int) -> int:
    """Rows per chunk, sized so one chunk is ~1 GiB of float64 at most."""
    rows = int(2**27 // max(8 * n_cols, 1))
    return int(np.clip(rows, 1, min(8192, max(total_rows, 1))))


def worker_count() -> int:
    env = os.environ.get("SMALLBALL_THREADS")
    if env is not None:
        try:
            k = int(env)
        except ValueError:
            k = 1
        return max(1, k)
    return 1


def map_chunks(fn, n_chunks: int):
    """Apply fn(chunk_index) for every chunk, in index order of the results.

    Uses a thread pool when SMALLBALL_THREADS > 1.  The reduction order is
    fixed by chunk index, never by completion order.
    """
    k = worker_count()
    if k <= 1 or n_chunks <= 1:
        return [fn(c) for c in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=k) as ex:
        return list(ex.map(fn, range(n_chunks)))

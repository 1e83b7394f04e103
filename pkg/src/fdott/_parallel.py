"""Derived random streams and worker-count-invariant chunked execution.

Draw ``j`` of any sampler uses the stream ``SeedSequence(entropy,
spawn_key=base_key + (j,))``, so results depend on the seed and the draw
index only.  Work is split into fixed-size chunks whose results are stored by
index; the number of worker threads changes the schedule, never the output.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 50


def seed_sequence(seed=None) -> np.random.SeedSequence:
    """Normalize an int, ``None``, SeedSequence or Generator to a SeedSequence.

    A Generator is consumed for 128 bits of entropy, so passing the same
    generator state twice gives the same sequence.
    """
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(0, 2**63)) << 64 | int(seed.integers(0, 2**63)))
    return np.random.SeedSequence(seed)


def child(base: np.random.SeedSequence, *key) -> np.random.SeedSequence:
    """Deterministic sub-sequence addressed by ``key`` (non-negative ints)."""
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + tuple(key))


def generators(base, start, stop):
    """Per-draw generators for draw indices ``start..stop-1``."""
    return [np.random.Generator(np.random.PCG64(child(base, j))) for j in range(start, stop)]


def run_chunks(fn, total, workers=1, chunk=CHUNK):
    """Evaluate ``fn(start, stop)`` over consecutive chunks and concatenate.

    ``fn`` must return an array (or list) of length ``stop - start``.
    """
    bounds = [(s, min(s + chunk, total)) for s in range(0, total, chunk)]
    workers = max(1, int(workers or 1))
    if workers == 1 or len(bounds) == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    if not parts:
        return np.empty(0)
    return np.concatenate([np.asarray(p, dtype=float) for p in parts])

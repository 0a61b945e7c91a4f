"""Seed expansion into independent, named random streams.

A single 64-bit master seed feeds :class:`numpy.random.SeedSequence`; each
consumer gets its own child stream keyed by name (or by a positional path
such as a merge-tree node), so the draws one part of the pipeline makes never
shift the draws of another.
"""

import numpy as np

STREAMS = {
    "init": 0,
    "selection": 1,
    "crossover": 2,
    "mutation": 3,
    "data_order": 4,
    "weights": 5,
    "split": 6,
    "synthetic": 7,
    "pairing": 8,
}

_SEED_MASK = (1 << 64) - 1


def _check_seed(seed):
    seed = int(seed)
    if seed < 0 or seed > _SEED_MASK:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed, name):
    """Generator for the named stream of ``seed``."""
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed, *path):
    """Child 64-bit seed at a positional ``path`` below ``seed``.

    Paths are tuples of non-negative ints, e.g. ``(level, pair_index)``; the
    result depends only on the position, never on execution order.
    """
    ss = np.random.SeedSequence(_check_seed(seed), spawn_key=(1000,) + tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])

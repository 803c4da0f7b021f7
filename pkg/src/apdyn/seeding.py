"""Reproducible random-number streams.

Every stochastic routine in this package takes either an integer seed or a
ready ``numpy.random.Generator``. Integer seeds are expanded through the
counter-based Philox bit generator, and replica ensembles derive one
independent stream per replica from (master seed, replica index) so that a
replica's output never depends on how many replicas run beside it.
"""

from __future__ import annotations

import numpy as np

RngLike = "int | np.random.SeedSequence | np.random.Generator"


def make_generator(rng) -> np.random.Generator:
    """Return a Generator for an int seed, a SeedSequence, or a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(rng))
    if isinstance(rng, (int, np.integer)):
        if rng < 0:
            raise ValueError("seed must be non-negative")
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(rng))))
    raise TypeError(f"expected int seed, SeedSequence or Generator, got {type(rng)!r}")


def seed_of(rng) -> int | None:
    """The integer seed if one was supplied, else None (opaque stream)."""
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return None


def replica_generator(master_seed: int, replica_index: int) -> np.random.Generator:
    """Stream for one replica, a pure function of (master seed, index)."""
    if replica_index < 0:
        raise ValueError("replica index must be non-negative")
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica_index),))
    return np.random.Generator(np.random.Philox(seq))

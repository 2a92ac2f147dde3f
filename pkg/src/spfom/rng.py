"""Seeded random streams.

Every random draw in the package comes from a ``numpy.random.Generator``
backed by PCG64. A root integer seed is expanded with ``SeedSequence`` and
split into named child streams in a fixed order::

    child 0 -> "generation"   (instance synthesis)
    child 1 -> "sampling"     (mini-batch customer draws in the solver)
    child 2 -> "choice"       (simulated purchases)
    child 3 -> "bundle"       (incidence matrices of synthetic bundles)

Replications (simulation runs) first spawn one child ``SeedSequence`` per run
from the root, then split each run seed the same way. Because ``SeedSequence``
spawning is specified by numpy independently of platform, the streams are
reproducible across machines.
"""

from __future__ import annotations

import numpy as np

STREAMS = ("generation", "sampling", "choice", "bundle")


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    # fresh copy: spawn() advances the parent's child counter
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    return np.random.SeedSequence(int(seed))


def stream(seed, name: str) -> np.random.Generator:
    """Return the named child stream of ``seed``."""
    if name not in STREAMS:
        raise KeyError(f"unknown stream {name!r}; expected one of {STREAMS}")
    children = _as_seed_sequence(seed).spawn(len(STREAMS))
    return np.random.Generator(np.random.PCG64(children[STREAMS.index(name)]))


def run_seeds(seed, runs: int) -> list[np.random.SeedSequence]:
    """One independent ``SeedSequence`` per replication run."""
    return _as_seed_sequence(seed).spawn(runs)

"""Reproducible Monte Carlo scheduling.

Every replication ``i`` draws from its own generator derived from
``(seed, i)`` by :class:`numpy.random.SeedSequence` spawn keys, so results do
not depend on how replications are spread over worker processes.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np


def replication_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for replication ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index))))


class _Task:
    # picklable closure: task(i) -> func(replication_rng(seed, i, stream), *args)
    def __init__(self, func, seed, stream, args):
        self.func, self.seed, self.stream, self.args = func, seed, stream, args

    def __call__(self, i):
        return self.func(replication_rng(self.seed, i, self.stream), *self.args)


def run_replications(func: Callable, n_reps: int, seed: int, workers: int = 1,
                     args: Sequence = (), stream: int = 0) -> list:
    """Evaluate ``func(rng_i, *args)`` for ``i = 0..n_reps-1``.

    Parameters
    ----------
    func : callable
        Module-level function (it must be picklable when ``workers > 1``).
    n_reps : int
    seed : int
    workers : int
        Number of processes; 1 runs serially in the calling process.
    args : sequence
        Extra positional arguments, shared by all replications.
    stream : int
        Distinguishes independent experiments run with the same seed.

    Returns
    -------
    list
        Results ordered by replication index.
    """
    task = _Task(func, seed, stream, tuple(args))
    if workers <= 1 or n_reps <= 1:
        return [task(i) for i in range(n_reps)]
    workers = min(int(workers), n_reps)
    chunk = max(1, n_reps // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(task, range(n_reps), chunksize=chunk))


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)

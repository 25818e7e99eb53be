"""Static worker pool with per-worker solve tallies.

Tasks ``0..n-1`` are split into contiguous chunks, chunk ``w`` going to worker
``w``.  Each chunk runs against a private tally that is merged into the shared
counter after the parallel section, so nothing mutable is shared while tasks
run.  Results come back in task order regardless of the worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .metrics import Tally

WORKERS_ENV = "PPMH_WORKERS"


def default_workers():
    value = os.environ.get(WORKERS_ENV)
    return max(1, int(value)) if value else 1


def chunk_bounds(num_tasks, workers):
    """``(start, stop)`` of the task chunk owned by each worker."""
    edges = [len(c) for c in np.array_split(np.arange(num_tasks), workers)]
    bounds, start = [], 0
    for size in edges:
        bounds.append((start, start + size))
        start += size
    return bounds


class WorkerPool:
    def __init__(self, workers=1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = int(workers)
        self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def map(self, fn, num_tasks, counter):
        """Run ``fn(i, tally)`` for every task and return the results in order."""
        if counter.workers != self.workers:
            raise ValueError("counter and pool disagree on the number of workers")
        bounds = chunk_bounds(num_tasks, self.workers)
        tallies = [Tally() for _ in range(self.workers)]

        def run_chunk(w):
            start, stop = bounds[w]
            return [fn(i, tallies[w]) for i in range(start, stop)]

        if self.workers == 1:
            chunks = [run_chunk(0)]
        else:
            if self._executor is None:
                self._executor = ThreadPoolExecutor(max_workers=self.workers)
            chunks = list(self._executor.map(run_chunk, range(self.workers)))
        for w, tally in enumerate(tallies):
            counter.per_worker[w] += tally
        return [r for chunk in chunks for r in chunk]

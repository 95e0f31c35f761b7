"""Ordered fan-out of independent chunks over worker processes."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence


def make_runner(threads: int = 1) -> Callable[[Callable, Sequence], list]:
    """Return ``run(fn, tasks) -> [fn(t) for t in tasks]``, optionally in parallel.

    Results always come back in task order, and each task carries its own random
    streams, so the output does not depend on the worker count.
    """
    if threads is None or threads <= 1:
        return lambda fn, tasks: [fn(t) for t in tasks]

    def run(fn, tasks):
        tasks = list(tasks)
        if len(tasks) <= 1:
            return [fn(t) for t in tasks]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, tasks))

    return run


def chunk_size_for(n_cube: int, bytes_per_mode: int = 160, budget: float = 4e8, cap: int = 256) -> int:
    """Paths per chunk, a function of the cutoff only (never of the worker count)."""
    from .lattice_field import GridSpec, half_space

    P = GridSpec(n_cube).physical_size
    per_path = half_space(n_cube).size * bytes_per_mode + 4 * P**3 * 8
    return int(max(1, min(cap, budget // per_path)))

from __future__ import annotations

from typing import Callable, TypeVar

from joblib import Parallel, delayed
from numpy.random import Generator

from picse_match.logs import get_logger
from picse_match.simlab.dgp import replicate_rng

log = get_logger("simlab")

T = TypeVar("T")


def run_replicates(
    fn: Callable[[int, Generator], T],
    seed: int,
    reps: int,
    threads: int = 1,
    *,
    stream: int = 0,
) -> list[T]:
    """Run ``fn(r, rng)`` per replicate and return results in replicate order.

    Replicate ``r`` of study ``stream`` always draws from the stream keyed by
    ``(seed, stream, r)``, whatever the thread count.
    """
    log.debug("running %d replicates (seed=%d, stream=%d, threads=%d)", reps, seed, stream, threads)
    return Parallel(n_jobs=threads, prefer="threads")(
        delayed(fn)(r, replicate_rng(seed, stream, r)) for r in range(reps)
    )

"""Counter-based random streams keyed by (seed, worker, step, purpose).

Every draw in a federated run comes from a stream built here. A stream is a
numpy ``Generator`` over a Philox bit generator whose 128-bit key is derived
from the full tuple through ``SeedSequence``, so two different tuples never
share a key and no stream depends on how many draws another stream made.
That is what lets workers run their local phases in any order.
"""

from __future__ import annotations

import enum

import numpy as np

__all__ = ["Purpose", "rng_stream", "MAX_SEED"]

MAX_SEED = 2**64 - 1


class Purpose(enum.IntEnum):
    """Domain-separation tag for a stream."""

    OUTER = 0
    INNER = 1
    INIT = 2
    OUTPUT_PICK = 3
    EVAL = 4
    TASK = 5


# worker index used for streams that belong to no particular worker
SERVER = 2**31 - 1


def rng_stream(seed: int, worker_id: int, t: int, purpose: Purpose | int) -> np.random.Generator:
    """Return the deterministic stream for ``(seed, worker_id, t, purpose)``.

    The same tuple always yields the same sequence; differing tuples yield
    independently keyed Philox streams.
    """
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    if worker_id < 0 or t < 0:
        raise ValueError(f"worker_id and t must be nonnegative, got {worker_id}, {t}")
    purpose = Purpose(purpose)
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(worker_id), int(t), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))

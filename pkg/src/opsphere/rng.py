"""Seeded random streams.

Every stream is a Philox4x64-10 counter-based generator (numpy's
``np.random.Philox``) keyed by the 128-bit pair ``(seed, stream)`` with the
counter starting at zero. A replica of an experiment with master seed ``S``
and index ``r`` draws its initial configuration from stream ``2r`` and its
interaction sequence from stream ``2r + 1``, so replicas never share state
and results do not depend on execution order.

Interaction pairs are drawn in fixed blocks of :data:`PAIR_BLOCK` values so
the realised sequence depends only on the key, never on how far a run goes.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidParams

MASK64 = (1 << 64) - 1
PAIR_BLOCK = 4096


def philox(seed: int, stream: int = 0) -> np.random.Generator:
    if seed < 0 or stream < 0:
        raise InvalidParams("seed and stream must be non-negative integers")
    key = np.array([seed & MASK64, stream & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def init_stream(master_seed: int, replica: int) -> np.random.Generator:
    return philox(master_seed, 2 * replica)


def dynamics_stream_index(replica: int) -> int:
    return 2 * replica + 1

"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by (seed, *ids).  Streams with distinct keys are independent, so replicas
(and particles within a replica) can be fanned out across workers in any
order without changing results.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream"]


def stream(seed: int, *ids: int) -> np.random.Generator:
    """Independent generator for the stream keyed by (seed, *ids)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in ids))
    return np.random.Generator(np.random.Philox(ss))

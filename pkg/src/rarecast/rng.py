"""Named RNG substreams derived from a single run seed.

Every stochastic stage (data synthesis, parameter init, shuffling) draws
from its own generator so that changing one stage never perturbs another.
"""

from __future__ import annotations

import numpy as np

# Stream domain codes. Fixed forever; values are part of the reproducibility
# contract, renumbering them changes every seeded output.
DATA = 0
INIT = 1
SHUFFLE = 2
ROUTER_INIT = 3
ROUTER_SHUFFLE = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream (seed, *key).

    Same arguments always give the same stream; distinct keys give
    statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))

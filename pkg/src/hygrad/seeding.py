"""One PRNG family for the whole artifact.

Every seeded draw goes through PCG64 so that identical seeds reproduce
identical streams; outputs record the generator name in their metadata.
"""

from __future__ import annotations

import numpy as np

PRNG_NAME = "pcg64"


def rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))

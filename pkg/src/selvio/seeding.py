"""Named random substreams derived from a single master seed.

Every source of randomness in the package (data generation, parameter
init, Gumbel noise, degradation) draws from its own named stream so the
components can be re-seeded independently while staying reproducible.
"""

import zlib

import numpy as np


def substream(seed: int, *names) -> np.random.Generator:
    """Return the generator for the substream `names` under `seed`.

    The same (seed, names) pair always yields an identically-seeded
    generator; different names yield statistically independent streams.
    """
    entropy = [int(seed) & 0xFFFFFFFF] + [
        zlib.crc32(str(n).encode("utf-8")) for n in names
    ]
    return np.random.default_rng(np.random.SeedSequence(entropy))

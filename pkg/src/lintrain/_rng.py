import zlib

import numpy as np


def rng_for(seed, tag, *extra):
    """Counter-based generator keyed by (seed, purpose tag, extra ints).

    Distinct tags give independent streams, so e.g. the weights drawn for a
    network never depend on how many data points were sampled first.
    """
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode())] + [int(e) for e in extra]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))

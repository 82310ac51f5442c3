"""Named, counter-based random streams derived from one root seed."""

import zlib

import numpy as np


def _word(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    key = int(key)
    if key < 0:
        raise ValueError("stream keys must be nonnegative")
    return key


def stream(seed, *keys):
    """Philox generator keyed by (seed, *keys); equal keys give equal draws."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_word(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))

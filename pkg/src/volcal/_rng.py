"""Counter-based random streams.

Every stream is numpy's Philox-4x64 with 10 rounds, keyed by the 128-bit
integer ``seed + (stream << 64)`` and started at counter 0. A fixed
``(seed, stream)`` pair therefore reproduces the same numbers on any platform
and independently of how many other streams exist.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed, index=0):
    seed = int(seed)
    index = int(index)
    if seed < 0 or index < 0:
        raise ValueError("seed and stream index must be nonnegative")
    key = (seed & _MASK64) | ((index & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))

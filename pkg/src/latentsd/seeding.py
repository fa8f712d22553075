"""Named random streams derived from one integer seed."""

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    # crc32 is stable across processes, unlike hash()
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])

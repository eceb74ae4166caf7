"""Seeded random streams.

Every random draw in the pipeline comes from ``stream(seed, name, index)``:
numpy's PCG64 bit generator seeded through ``SeedSequence`` with the entropy
words ``[seed, crc32(name), index]``. Streams for different entities (road
edge 3, parking row 12, ...) are independent of each other and of the order
or worker in which entities are processed, so results are reproducible
across runs and worker counts.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), key, int(index)])))

"""All randomness flows from one root seed through named substreams, so that
independent pipeline stages (init, negative sampling, splits, ...) stay
reproducible when other stages change their draw counts.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Deterministic generator for (seed, name), independent across names."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, tag])))

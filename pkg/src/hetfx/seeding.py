"""Deterministic RNG derivation keyed by (master seed, split, purpose).

Every stochastic step in the pipeline draws from its own generator derived
here, so results do not depend on execution order or worker scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


def derive_rng(master_seed: int, *tags) -> np.random.Generator:
    entropy = [int(master_seed)] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))

"""Single source of randomness.

Every random draw in the package comes from numpy's Philox counter-based
generator keyed by the user seed. Independent streams are derived with
``SeedSequence`` spawn keys, so a stream depends only on ``(seed, key)``
and never on evaluation order or worker count.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for ``seed`` and an optional integer stream key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Integer seed for the sub-stream ``key`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])

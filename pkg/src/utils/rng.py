"""Seeded counter-based random streams."""

import numpy as np

GENERATOR_VERSION = "numpy-philox-seedseq-v1"


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent Philox stream for (seed, *stream); the same key always yields the same draws."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(seq))

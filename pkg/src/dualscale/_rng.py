import numpy as np


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent counter-based stream for one (seed, stratum) key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))

"""Named random streams derived from one 64-bit seed."""
import numpy as np

STREAMS = {"init": 0, "policy": 1, "env": 2, "faults": 3}


def stream(seed: int, name: str) -> np.random.Generator:
    if name not in STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(STREAMS[name],))
    return np.random.Generator(np.random.PCG64(ss))

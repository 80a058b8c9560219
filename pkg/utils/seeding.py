import numpy as np

_MASK = (1 << 64) - 1


def derive_seed(master_seed: int, index: int) -> int:
    """
    Per-sample seed: SplitMix64 finalizer applied to (master_seed + index) mod 2**64.

    Sample i of a run always gets the same stream whatever the worker count.
    """
    z = (int(master_seed) + int(index)) & _MASK
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def sample_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, index))

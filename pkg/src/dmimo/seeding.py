"""Per-trial random streams derived from one master seed.

A trial's stream depends only on ``(master_seed, index)``, so results do
not change with execution order or parallelism. The mixing function is
SplitMix64 and must not change, or stored seeds stop reproducing.
"""

import numpy as np

__all__ = ["splitmix64", "trial_seed", "trial_rng"]

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x`` (64-bit)."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def trial_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trial ``index``: ``splitmix64(splitmix64(seed) ^ index)``."""
    return splitmix64(splitmix64(int(master_seed) & _MASK) ^ (int(index) & _MASK))


def trial_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(trial_seed(master_seed, index))

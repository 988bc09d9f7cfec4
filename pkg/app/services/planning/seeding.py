"""
Per-image seeds.

The seed of an image is a fixed 64-bit hash of (global_seed, image_id), so an
entry can be regenerated on its own without replaying the rest of the plan.
"""

import numpy as np

MASK64 = (1 << 64) - 1

# Stream tags: plan-time parameter draws and apply-time draws never share a stream
PLAN_STREAM = 0
APPLY_STREAM = 1


def splitmix64(x: int) -> int:
    """One step of the splitmix64 generator as a bijective 64-bit mixer."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stable_hash(global_seed: int, image_id: int) -> int:
    """Platform-independent 64-bit seed for one image."""
    return splitmix64(splitmix64(global_seed & MASK64) ^ (image_id & MASK64))


def rng_for(seed: int, *tags: int) -> np.random.Generator:
    """Independent generator for one (seed, tag...) stream."""
    return np.random.default_rng(np.random.SeedSequence([seed & MASK64, *tags]))

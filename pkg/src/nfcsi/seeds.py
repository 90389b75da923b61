"""Deterministic seed derivation.

All randomness in the toolkit flows from a single 64-bit master seed. Derived
seeds come from the splitmix64 finalizer (Steele/Lea/Flood constants), a
published integer hash, so any sample or stage is regenerable in isolation and
reruns of one stage never perturb another.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1

# splitmix64 constants
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB


def splitmix64(z):
    """The splitmix64 output finalizer on a 64-bit integer."""
    z &= MASK64
    z = (z ^ (z >> 30)) * MIX_A & MASK64
    z = (z ^ (z >> 27)) * MIX_B & MASK64
    return z ^ (z >> 31)


def mix_seeds(seed, index):
    """Derive the seed for item `index` under `seed` (e.g. per-sample seeds)."""
    return splitmix64((seed + (index + 1) * GOLDEN_GAMMA) & MASK64)


def purpose_seed(master_seed, tag):
    """Derive an independent stream seed for a named purpose ('data', 'init',
    'train', ...). The tag is hashed to 64 bits (blake2b) and xor-folded into
    the master seed before finalization, so streams for distinct purposes are
    decorrelated and stable across runs."""
    tag_bits = int.from_bytes(
        hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest(), "little"
    )
    return splitmix64((master_seed ^ tag_bits) & MASK64)


def rng_from(seed):
    """numpy Generator for a derived seed."""
    return np.random.default_rng(seed)

"""Deterministic per-block random streams.

Every random block of a network (feature window, enhancement block,
fuzzy subsystem) draws from a stream keyed by the run seed, the block kind
and the block's ordinal. Incrementally grown and from-scratch networks
with the same layout therefore share all their random draws.
"""
import numpy as np

_KIND_KEYS = {"feature": 1, "enhancement": 2}
_MASK64 = (1 << 64) - 1


def seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed) & _MASK64)


def child(ss, index):
    """Stateless child stream, unlike ``SeedSequence.spawn``."""
    ss = seed_sequence(ss)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (index,))


def block_seed(seed, kind, index):
    ss = seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=(_KIND_KEYS[kind], int(index)))


def block_rng(seed, kind, index):
    return np.random.default_rng(block_seed(seed, kind, index))

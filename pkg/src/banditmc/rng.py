"""Seeded, splittable random streams.

Every random stream in the package is a ``numpy.random.Generator`` built
from a ``SeedSequence`` whose spawn key records where it sits in the
experiment tree: ``(block, role, method, arm)``.  Two streams with the same master
seed and key are identical; streams with different keys are independent.
This is what makes results independent of how replicate blocks are
distributed over worker processes.
"""

from __future__ import annotations

import zlib

import numpy as np

# spawn-key roles
POLICY = 0
ARM = 1
AUX = 2


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for master ``seed`` at position ``key`` in the stream tree."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def stream_id(name: str) -> int:
    """Stable nonnegative integer for a method name (used in spawn keys)."""
    return zlib.crc32(name.encode()) & 0x7FFFFFFF


def block_streams(seed: int, block: int, n_arms: int, stream: int = 0) -> tuple[np.random.Generator, list[np.random.Generator]]:
    """Policy stream plus one stream per arm for replicate block ``block``.

    ``stream`` separates methods evaluated on the same experiment, so each
    method sees its own independent draws.
    """
    policy_rng = make_rng(seed, block, POLICY, stream)
    arm_rngs = [make_rng(seed, block, ARM, stream, k) for k in range(n_arms)]
    return policy_rng, arm_rngs

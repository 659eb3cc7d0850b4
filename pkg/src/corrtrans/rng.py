"""Deterministic random-stream derivation.

Every randomized component in the package draws from a counter-based
Philox generator whose stream is derived from a single 64-bit master
seed plus a tuple of small integers identifying the task (realization
index, pixel index, experiment id and so on). Streams for different
id tuples are statistically independent and reproducible regardless
of execution order or worker count.

The jit kernels cannot hold a numpy Generator, so they derive their
own per-task state with splitmix64 from the same master seed. The
mixing function lives here as well so tests can check the kernel and
Python sides agree.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "substream_seed", "mix64"]

_MASK64 = (1 << 64) - 1


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Return a Generator for the task identified by ``path``.

    The same (master_seed, path) pair always yields the same stream.
    Distinct paths yield independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def mix64(x: int) -> int:
    """One splitmix64 output step. Pure Python mirror of the kernel version."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def substream_seed(master_seed: int, *path: int) -> int:
    """Fold a task id tuple into a single 64-bit kernel seed.

    Used to hand per-task seeds to jit kernels. Chained splitmix64
    steps keep nearby ids far apart in state space.
    """
    s = int(master_seed) & _MASK64
    for p in path:
        s = mix64(s ^ (int(p) & _MASK64))
    return s

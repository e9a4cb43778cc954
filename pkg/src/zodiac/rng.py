"""Counter-based random streams keyed by (seed, agent, iteration).

Every random draw made by an algorithm comes from a stream addressed by
``(seed, agent, k, tag)``.  Changing the number of agents, the checkpoint
cadence, or the execution backend never perturbs another agent's draws.

Bit-exact definition (all arithmetic modulo 2**64)::

    mix64(z):
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        return z ^ (z >> 31)

    key = mix64(seed  ^ 0x243F6A8885A308D3)
    key = mix64(key ^ (agent * 0x9E3779B97F4A7C15))
    key = mix64(key ^ (k     * 0xC2B2AE3D27D4EB4F))
    key = mix64(key ^ (tag   * 0x165667B19E3779F9))

    draw number i (i = 1, 2, ...) = mix64(key + i * 0x9E3779B97F4A7C15)

Derived variates:

* ``uniform``   = (draw >> 11) * 2**-53, in [0, 1)
* ``integers(m)`` = floor(uniform * m)
* ``normal``    = sqrt(-2 log(1 - u1)) * cos(2 pi u2), consuming two uniforms
* ``subset(p, n_c)`` = first n_c entries of a partial Fisher-Yates shuffle of
  ``0..p-1`` where step t swaps position t with ``t + integers(p - t)``
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_SEED_SALT = 0x243F6A8885A308D3
_AGENT_MUL = 0x9E3779B97F4A7C15
_ITER_MUL = 0xC2B2AE3D27D4EB4F
_TAG_MUL = 0x165667B19E3779F9
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 2.0**-53

TAG_STEP = 0
TAG_INIT = 1


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, agent: int, k: int, tag: int = TAG_STEP) -> int:
    h = mix64((seed & MASK64) ^ _SEED_SALT)
    h = mix64(h ^ ((agent * _AGENT_MUL) & MASK64))
    h = mix64(h ^ ((k * _ITER_MUL) & MASK64))
    return mix64(h ^ ((tag * _TAG_MUL) & MASK64))


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


_SCALAR_CUTOFF = 16


class AgentStream:
    """Sequential reader over one ``(seed, agent, k, tag)`` stream."""

    __slots__ = ("key", "counter")

    def __init__(self, seed: int, agent: int = 0, k: int = 0, tag: int = TAG_STEP):
        self.key = stream_key(seed, agent, k, tag)
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.key + self.counter * GOLDEN)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def integers(self, m: int) -> int:
        return min(int(self.uniform() * m), m - 1)

    def normal(self) -> float:
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(math.tau * u2)

    def uniforms(self, m: int) -> np.ndarray:
        """``m`` uniforms, identical to ``m`` successive :meth:`uniform` calls."""
        idx = np.arange(self.counter + 1, self.counter + m + 1, dtype=np.uint64)
        self.counter += m
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + idx * np.uint64(GOLDEN)
            z = _mix64_array(z)
        return (z >> np.uint64(11)).astype(np.float64) * _INV53

    def normals(self, m: int) -> np.ndarray:
        if m <= _SCALAR_CUTOFF:
            # short draws are cheaper through the scalar path than through numpy
            return np.array([self.normal() for _ in range(m)])
        u = self.uniforms(2 * m)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(math.tau * u2)

    def subset(self, p: int, n_c: int) -> np.ndarray:
        if not 1 <= n_c <= p:
            raise ValueError(f"need 1 <= n_c <= p, got n_c={n_c}, p={p}")
        perm = list(range(p))
        for t in range(n_c):
            j = t + self.integers(p - t)
            perm[t], perm[j] = perm[j], perm[t]
        return np.asarray(perm[:n_c], dtype=np.intp)


class RngStreams:
    """Factory for per-(agent, iteration) streams under one master seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def __call__(self, agent: int, k: int, tag: int = TAG_STEP) -> AgentStream:
        return AgentStream(self.seed, agent, k, tag)

    def __repr__(self) -> str:
        return f"RngStreams(seed={self.seed})"

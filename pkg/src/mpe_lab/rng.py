"""Counter-based random streams.

Every draw is a pure function of ``(seed, purpose, unit, stage, slot)``,
computed by chaining the SplitMix64 finalizer over the key.  Two simulations
that share a seed therefore see identical noise for every (unit, stage,
purpose) no matter how their trajectories diverge, which is what the
common-random-numbers finite differences rely on.  Chunked and unchunked
simulations are also bitwise identical.
"""
from __future__ import annotations

import zlib

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix64(*words: int) -> int:
    """Hash a tuple of integers into one 64-bit word (scalar helper)."""
    h = np.zeros(1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for w in words:
            h = _mix(h + np.uint64(w & _MASK64) + _GOLDEN)
    return int(h[0])


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for e.g. (grid point, replication); order of use is irrelevant."""
    return mix64(seed, *path) >> 1


class Streams:
    """Keyed uniform/normal draws, vectorized over unit ids."""

    def __init__(self, seed: int, salts: dict[str, int] | None = None):
        self.seed = int(seed)
        self._salts = dict(salts or {})

    def _key(self, purpose: str) -> np.uint64:
        tag = zlib.crc32(purpose.encode())
        return np.uint64(mix64(self.seed, tag, self._salts.get(purpose, 0)))

    def bits(self, purpose: str, units: np.ndarray, stage: int, slot: int = 0) -> np.ndarray:
        u = np.asarray(units, dtype=np.uint64)
        with np.errstate(over="ignore"):
            h = _mix(self._key(purpose) + (u + np.uint64(1)) * _GOLDEN)
            h = _mix(h + np.uint64(stage + 1) * _GOLDEN)
            h = _mix(h + np.uint64(slot + 1) * _GOLDEN)
        return h

    def uniform(self, purpose: str, units: np.ndarray, stage: int, slot: int = 0) -> np.ndarray:
        """Uniforms on the open interval (0, 1)."""
        h = self.bits(purpose, units, stage, slot)
        return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, purpose: str, units: np.ndarray, stage: int, slot: int = 0) -> np.ndarray:
        return ndtri(self.uniform(purpose, units, stage, slot))

    def normal_matrix(self, purpose: str, units: np.ndarray, stage: int, width: int) -> np.ndarray:
        return np.stack([self.normal(purpose, units, stage, j) for j in range(width)], axis=1)

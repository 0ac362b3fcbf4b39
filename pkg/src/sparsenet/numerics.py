"""Dense float64 arrays plus a portable seeded random source.

Vectors and matrices are plain numpy float64 arrays; the helpers here add
the shape and finiteness checking the rest of the package relies on.  The
random source is a splitmix64 stream implemented in-repo so that identical
seeds give identical draws on every platform, independent of numpy's own
generators.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def as_vector(values) -> np.ndarray:
    """Coerce to a finite 1-d float64 array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite entries")
    return v


def as_matrix(values) -> np.ndarray:
    """Coerce to a finite 2-d row-major float64 array."""
    m = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with explicit shape validation."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1:
        raise ShapeError(f"matvec needs a matrix and a vector, got {m.shape} and {v.shape}")
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"cannot multiply matrix of shape {m.shape} by vector of length {v.shape[0]}")
    return m @ v


def mix64(x: int) -> int:
    """splitmix64 finalizer; used to derive decorrelated seeds from a base seed."""
    z = (x + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class SeededRng:
    """splitmix64 generator.

    The state advances by a fixed increment per draw, which lets
    :meth:`uniforms` produce a whole block of draws vectorized while staying
    bit-identical to the equivalent sequence of scalar calls.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """One double in [lo, hi), using the top 53 bits of a draw."""
        u = (self.next_u64() >> 11) * 2.0 ** -53
        return lo + (hi - lo) * u

    def uniforms(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """n doubles in [lo, hi); same stream as n scalar `uniform` calls."""
        if n < 0:
            raise ValueError("n must be non-negative")
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        z = np.uint64(self._state) + steps
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self._state = (self._state + n * _GAMMA) & _MASK64
        u = (z >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return lo + (hi - lo) * u

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (0x10000000000000000 // n) * n
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n


def shuffle_indices(n: int, rng: SeededRng) -> np.ndarray:
    """Uniform permutation of 0..n-1 (Fisher-Yates); n=0 gives an empty array."""
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def derived_seed(base: int, *salts: int) -> int:
    """Deterministic child seed from a base seed and integer salts."""
    s = base & _MASK64
    for salt in salts:
        s = mix64(s ^ (salt & _MASK64))
    return s


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate 1-d float64 arrays (empty list gives an empty vector)."""
    if not parts:
        return np.zeros(0, dtype=np.float64)
    return np.concatenate([np.asarray(p, dtype=np.float64).ravel() for p in parts])

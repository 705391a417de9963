"""Candidate direction patterns and the portable random generator that rotates them.

The generator is SplitMix64: a single 64-bit word of state, identical output in
plain Python calls and inside compiled kernels, so generation runs replay
bit-for-bit from a seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

RNG_ID = "splitmix64"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def rng_next(state):
    state[0] += _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def rng_uniform(state):
    """Uniform double in [0, 1) with 53 random bits."""
    return float(rng_next(state) >> _S11) * _INV53


@njit(cache=True)
def rng_normal(state):
    # Box-Muller, second variate discarded to keep the stream position simple
    u1 = rng_uniform(state)
    u2 = rng_uniform(state)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)


class SplitMix64:
    """Seedable generator; ``state`` is a one-element uint64 array shared with kernels."""

    algorithm = RNG_ID

    def __init__(self, seed: int = 0):
        self.state = np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)

    def random(self) -> float:
        return rng_uniform(self.state)

    def normal(self) -> float:
        return rng_normal(self.state)

    def uniform(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        u = np.array([rng_uniform(self.state) for _ in range(lo.size)])
        return lo + u * (hi - lo)


@dataclass(frozen=True)
class DirectionPattern:
    vectors: np.ndarray  # (n, dim), unit rows

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def count(self) -> int:
        return self.vectors.shape[0]


def _pattern_vectors(n: int, dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0 if k % 2 == 0 else -1.0] for k in range(n)])
    if dim == 2:
        phi = 2.0 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(phi), np.sin(phi)])
    # latitude bands along the last coordinate, each filled with a lower-dim pattern
    bands = math.ceil(n ** (1.0 / (dim - 1)))
    psi = np.pi * (np.arange(bands) + 0.5) / bands
    weight = np.sin(psi)
    counts = np.maximum(1, np.rint(n * weight / weight.sum()).astype(int))
    rows = []
    for k in range(bands):
        ring = _pattern_vectors(int(counts[k]), dim - 1) * math.sin(psi[k])
        last = np.full((ring.shape[0], 1), math.cos(psi[k]))
        rows.append(np.hstack([ring, last]))
    v = np.vstack(rows)
    return v / np.linalg.norm(v, axis=1)[:, None]


def base_pattern(n: int, dim: int) -> DirectionPattern:
    """Fixed discretization of the unit sphere in ``dim`` dimensions with about ``n`` directions.

    For ``dim`` 1 and 2 the count is exactly ``n``; in higher dimensions the
    band construction rounds per band, so read ``count`` on the result.
    """
    if n < 1:
        raise ValueError("pattern needs at least one direction")
    if dim < 1:
        raise ValueError("pattern dimension must be positive")
    return DirectionPattern(np.ascontiguousarray(_pattern_vectors(n, dim), dtype=float))


def default_count(dim: int) -> int:
    return {1: 2, 2: 15}.get(dim, 15 * 3 ** (dim - 2))


@njit(cache=True)
def rotate_into(vectors, state, out):
    """Apply one random orthogonal transform to every row of ``vectors``."""
    n, dim = vectors.shape
    if dim == 1:
        sign = 1.0 if rng_uniform(state) < 0.5 else -1.0
        for k in range(n):
            out[k, 0] = sign * vectors[k, 0]
    elif dim == 2:
        theta = 2.0 * math.pi * rng_uniform(state)
        c = math.cos(theta)
        s = math.sin(theta)
        for k in range(n):
            x = vectors[k, 0]
            y = vectors[k, 1]
            out[k, 0] = c * x - s * y
            out[k, 1] = s * x + c * y
    else:
        g = np.empty((dim, dim))
        for i in range(dim):
            for j in range(dim):
                g[i, j] = rng_normal(state)
        q, r = np.linalg.qr(g)
        for j in range(dim):
            if r[j, j] < 0.0:
                for i in range(dim):
                    q[i, j] = -q[i, j]
        for k in range(n):
            for i in range(dim):
                acc = 0.0
                for j in range(dim):
                    acc += q[i, j] * vectors[k, j]
                out[k, i] = acc


def rotated(pattern: DirectionPattern, rng: SplitMix64) -> DirectionPattern:
    out = np.empty_like(pattern.vectors)
    rotate_into(pattern.vectors, rng.state, out)
    return DirectionPattern(out)

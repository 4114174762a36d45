"""Deterministic random number generation for simulation and initialization.

All randomness in this package flows through :class:`Rng`, a SplitMix64
stream generator, so that every simulated dataset, network draw, and
weight initialization is reproducible bit-for-bit across platforms for a
given seed.  Independent streams (per replication, per method) are
derived with :func:`derive_seed` rather than by partitioning one stream.
"""

from __future__ import annotations

import math

_MASK64 = 0xFFFFFFFFFFFFFFFF
# SplitMix64 constants (Steele, Lea & Flood's mixer, as used in Java 8's
# SplittableRandom and xoshiro seeding).
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(state: int) -> int:
    """One SplitMix64 output for the given 64-bit state."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """Derive an independent 64-bit seed from a base seed and an index.

    Mixes the index through two SplitMix64 rounds so that nearby indices
    give unrelated streams.
    """
    return splitmix64(splitmix64(base_seed & _MASK64) ^ (index & _MASK64))


def seed_for(name: str, base_seed: int) -> int:
    """Derive a seed keyed by a string label (stable across runs)."""
    h = 0xCBF29CE484222325  # FNV-1a offset basis
    for b in name.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return derive_seed(base_seed, h)


class Rng:
    """SplitMix64 stream with uniform and Poisson sampling.

    The Poisson sampler is pinned: the exponential-product method below
    rate 30, Hormann's PTRS transformed rejection at and above 30.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) using the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform_signed(self) -> float:
        """Uniform double in (-1, 1); exact zero is redrawn."""
        while True:
            u = 2.0 * self.uniform() - 1.0
            if u != 0.0:
                return u

    def poisson(self, lam: float) -> int:
        if lam < 0.0 or not math.isfinite(lam):
            raise ValueError(f"Poisson rate must be finite and >= 0, got {lam}")
        if lam == 0.0:
            return 0
        if lam < 30.0:
            return self._poisson_product(lam)
        return self._poisson_ptrs(lam)

    def _poisson_product(self, lam: float) -> int:
        # Knuth: count uniforms until their product drops below exp(-lam).
        limit = math.exp(-lam)
        k = 0
        prod = self.uniform()
        while prod > limit:
            k += 1
            prod *= self.uniform()
        return k

    def _poisson_ptrs(self, lam: float) -> int:
        # Hormann (1993) PTRS transformed rejection, valid for lam >= 10.
        log_lam = math.log(lam)
        b = 0.931 + 2.53 * math.sqrt(lam)
        a = -0.059 + 0.02483 * b
        inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
        v_r = 0.9277 - 3.6224 / (b - 2.0)
        while True:
            u = self.uniform() - 0.5
            v = self.uniform()
            us = 0.5 - abs(u)
            k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
            if us >= 0.07 and v <= v_r:
                return int(k)
            if k < 0 or (us < 0.013 and v > us):
                continue
            lhs = math.log(v * inv_alpha / (a / (us * us) + b))
            if lhs <= k * log_lam - lam - math.lgamma(k + 1.0):
                return int(k)

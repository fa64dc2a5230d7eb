"""Portable deterministic PRNG used for shot sampling.

Index sampling must reproduce bit-for-bit across platforms and Python
versions, so it is built on exact 64-bit integer arithmetic instead of
numpy's generators.

Algorithm and constants (all arithmetic mod 2^64):

  seeding (splitmix64):
      z  = seed + 0x9E3779B97F4A7C15
      z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
      z ^= z >> 27;  z *= 0x94D049BB133111EB
      z ^= z >> 31

  stream (xorshift64*):
      s ^= s >> 12;  s ^= s << 25;  s ^= s >> 27
      out = s * 0x2545F4914F6CDD1D

Bounded draws use rejection sampling on the top of the 64-bit range, so
they are unbiased and independent of platform integer width.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1

_SPLITMIX_INC = 0x9E3779B97F4A7C15
_SPLITMIX_MUL1 = 0xBF58476D1CE4E5B9
_SPLITMIX_MUL2 = 0x94D049BB133111EB
_XORSHIFT_MUL = 0x2545F4914F6CDD1D


def splitmix64(x: int) -> int:
    """One splitmix64 step; expands a seed into a well-mixed 64-bit state."""
    z = (x + _SPLITMIX_INC) & _MASK64
    z = ((z ^ (z >> 30)) * _SPLITMIX_MUL1) & _MASK64
    z = ((z ^ (z >> 27)) * _SPLITMIX_MUL2) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class Xorshift64Star:
    """xorshift64* stream seeded through splitmix64."""

    def __init__(self, seed: int):
        state = splitmix64(seed & _MASK64)
        # xorshift64* has a single forbidden state
        self._state = state if state != 0 else _SPLITMIX_INC

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> 12
        s = (s ^ (s << 25)) & _MASK64
        s ^= s >> 27
        self._state = s
        return (s * _XORSHIFT_MUL) & _MASK64

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def sample_without_replacement(self, pool: list[int], k: int) -> list[int]:
        """Draw k distinct items via a partial Fisher-Yates shuffle.

        The input list is copied; the result preserves the draw in
        selection order.
        """
        if k > len(pool):
            raise ValueError(f"cannot sample {k} items from pool of {len(pool)}")
        items = list(pool)
        for i in range(k):
            j = i + self.randbelow(len(items) - i)
            items[i], items[j] = items[j], items[i]
        return items[:k]

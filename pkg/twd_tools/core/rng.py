"""
Deterministic, seedable random source.

PCG32 (XSH-RR output, 64-bit LCG state). Output streams depend only on the seed,
never on the platform or on numpy's generator versions, so every pipeline run
with the same seed reproduces byte-identical results.

A RandomSource is single-owner. Workers that need randomness get their own
substream via fork(label).
"""

import hashlib
import math
from typing import List

from ..utils.exceptions import InvalidArgumentError

_MASK32 = 0xFFFF_FFFF
_MASK64 = 0xFFFF_FFFF_FFFF_FFFF
_MULTIPLIER = 6364136223846793005
_TWO_POW_53 = float(1 << 53)


class RandomSource:
    """PCG32 random stream keyed by a 64-bit unsigned seed and a stream selector."""

    def __init__(self, seed: int, stream: int = 0):
        if not 0 <= seed <= _MASK64:
            raise InvalidArgumentError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.stream = stream & _MASK64
        self._inc = ((self.stream << 1) | 1) & _MASK64
        self._state = 0
        self._advance()
        self._state = (self._state + seed) & _MASK64
        self._advance()

    def _advance(self) -> None:
        self._state = (self._state * _MULTIPLIER + self._inc) & _MASK64

    def next_u32(self) -> int:
        """Next raw 32-bit output."""
        old = self._state
        self._advance()
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def uniform_index(self, n: int) -> int:
        """
        Uniform integer in {1..n}, each with probability exactly 1/n.

        Outputs below 2**32 mod n are rejected so the remaining range is an
        exact multiple of n.
        """
        if n < 1:
            raise InvalidArgumentError(f"uniform_index needs n >= 1, got {n}")
        threshold = (1 << 32) % n
        while True:
            value = self.next_u32()
            if value >= threshold:
                return 1 + value % n

    def unit(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        high = self.next_u32() >> 5
        low = self.next_u32() >> 6
        return (high * 67108864.0 + low) / _TWO_POW_53

    def uniform_real(self, lo: float, hi: float) -> float:
        """Uniform float in the half-open range [lo, hi)."""
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
            raise InvalidArgumentError(f"uniform_real needs finite lo < hi, got [{lo}, {hi})")
        value = lo + (hi - lo) * self.unit()
        # rounding can land exactly on hi for very wide ranges
        return value if value < hi else math.nextafter(hi, lo)

    def gaussian(self, sigma: float = 1.0) -> float:
        """Zero-mean normal draw (Box-Muller, one value per call)."""
        u1 = 1.0 - self.unit()  # (0, 1]
        u2 = self.unit()
        return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def gaussians(self, count: int, sigma: float = 1.0) -> List[float]:
        return [self.gaussian(sigma) for _ in range(count)]

    def fork(self, label: str) -> 'RandomSource':
        """
        Independent substream keyed by (seed, label).

        Depends only on the seed, not on how far this stream has advanced,
        and leaves this stream untouched.
        """
        digest = hashlib.blake2b(
            self.seed.to_bytes(8, 'little') + self.stream.to_bytes(8, 'little') + label.encode('utf-8'),
            digest_size=16,
        ).digest()
        child_seed = int.from_bytes(digest[:8], 'little')
        child_stream = int.from_bytes(digest[8:], 'little')
        return RandomSource(child_seed, child_stream)

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, stream={self.stream})"


def uniform_index(src: RandomSource, n: int) -> int:
    return src.uniform_index(n)


def uniform_real(src: RandomSource, lo: float, hi: float) -> float:
    return src.uniform_real(lo, hi)


def fork(src: RandomSource, label: str) -> RandomSource:
    return src.fork(label)

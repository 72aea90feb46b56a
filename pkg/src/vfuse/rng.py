"""Portable seeded random numbers.

xoshiro256** (Blackman & Vigna) with its 256-bit state filled from a
SplitMix64 stream started at the user seed. The algorithm is fixed so the
same seed gives the same scenes and parameters on every platform:

    splitmix64:  s += 0x9E3779B97F4A7C15
                 z = s
                 z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
                 z = (z ^ (z >> 27)) * 0x94D049BB133111EB
                 return z ^ (z >> 31)

    xoshiro256**: result = rotl(s1 * 5, 7) * 9
                  t = s1 << 17
                  s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3
                  s2 ^= t;  s3 = rotl(s3, 45)

Floats in [0, 1) use the top 53 bits: ``(x >> 11) * 2**-53``.
All arithmetic is modulo 2**64.
"""

import math

import numpy as np

_MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state):
    """Advance a SplitMix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    def __init__(self, seed=0):
        sm = int(seed) & _MASK
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self):
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, low=0.0, high=1.0):
        return low + (high - low) * self.random()

    def normal(self):
        # Box-Muller; 1 - u keeps the log argument in (0, 1]
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def integers(self, low, high):
        """Uniform integer in ``[low, high)`` (modulo reduction; bias is negligible here)."""
        span = int(high) - int(low)
        if span <= 0:
            raise ValueError("empty integer range")
        return int(low) + self.next_u64() % span

    def uniform_array(self, shape, low=0.0, high=1.0):
        """Array of uniforms filled in C order, one draw per element."""
        n = int(np.prod(shape, dtype=np.int64))
        vals = np.fromiter((self.random() for _ in range(n)), dtype=np.float64, count=n)
        return low + (high - low) * vals.reshape(shape)

    def normal_array(self, shape):
        n = int(np.prod(shape, dtype=np.int64))
        vals = np.fromiter((self.normal() for _ in range(n)), dtype=np.float64, count=n)
        return vals.reshape(shape)

    def spawn(self, tag):
        """Independent child stream derived from this stream's next output and ``tag``."""
        return Xoshiro256((self.next_u64() ^ (int(tag) * 0x9E3779B97F4A7C15)) & _MASK)

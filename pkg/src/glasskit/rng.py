"""Portable deterministic random generator for fixture synthesis.

SplitMix64: 64-bit counter state advanced by the golden-ratio increment,
each output produced by two xor-multiply mixing rounds.  The k-th output
after seeding with ``s`` is ``mix(s + k * GAMMA)`` (k starting at 1), so
bulk generation vectorizes with numpy while staying bit-identical to
repeated scalar calls.

Derived draws are pinned down so that fixtures are reproducible across
implementations and platforms:

* ``below(n)``   -> ``next_u64() % n``  (modulo reduction; its bias is
  astronomically small for the ranges used here and keeps the algorithm
  one line in any language)
* ``uniform()``  -> ``(next_u64() >> 11) * 2**-53``  in [0, 1)

Changing any of these rules breaks fixture compatibility.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_INV_2_53 = 2.0 ** -53


def _mix(z: int) -> int:
    z ^= z >> 30
    z = (z * _MUL1) & _MASK64
    z ^= z >> 27
    z = (z * _MUL2) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Small-state generator; the full output stream is a pure function of the seed."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix(self._state)

    def fill_u64(self, n: int) -> np.ndarray:
        """Next ``n`` outputs as a uint64 array, identical to n scalar calls."""
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self._state) + steps * np.uint64(_GAMMA)
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MUL1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MUL2)
        z ^= z >> np.uint64(31)
        self._state = (self._state + n * _GAMMA) & _MASK64
        return z

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _INV_2_53

    def fill_uniform(self, n: int) -> np.ndarray:
        return (self.fill_u64(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def below(self, n: int) -> int:
        """Integer in [0, n)."""
        if n <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % n

    def fill_below(self, count: int, n: int) -> np.ndarray:
        if n <= 0:
            raise ValueError("bound must be positive")
        return (self.fill_u64(count) % np.uint64(n)).astype(np.int64)

    def randrange(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi)."""
        return lo + self.below(hi - lo)

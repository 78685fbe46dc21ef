"""Deterministic random number generation.

Every randomized stage of the pipeline draws from :class:`SplitMix64` so that
a seed fully determines corpus construction, pair sampling, and weight
initialization, bit for bit, on every platform.

The mappings from the raw 64-bit stream to uniforms and bounded integers are
part of the reproducibility contract and must not change:

* ``next_u64``   -- one SplitMix64 step (add the golden-ratio increment, mix).
* ``uniform``    -- ``(next_u64() >> 11) * 2**-53``, a double in ``[0, 1)``.
* ``below(n)``   -- ``(next_u64() * n) >> 64``, an integer in ``[0, n)``.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """SplitMix64 generator with a 64-bit state."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        return _mix(self.state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) using the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) via 64-bit fixed-point multiply."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        return (self.next_u64() * n) >> 64

    def chance(self, p: float) -> bool:
        """True with probability p (one uniform draw)."""
        return self.uniform() < p

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, high index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def fill_uniform(self, n: int) -> np.ndarray:
        """n uniforms in [0, 1) as float64, identical to n uniform() calls.

        SplitMix64 state after k steps is ``seed + k * gamma``, so the whole
        block is computed vectorized and the state advanced in one jump.
        """
        if n < 0:
            raise ValueError("n must be non-negative")
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK64
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _fnv1a(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def derive(seed: int, *tokens: str) -> SplitMix64:
    """A generator whose seed is a stable function of ``seed`` and ``tokens``.

    Used to give parallel-safe, order-independent streams to per-image and
    per-stage work (e.g. ``derive(seed, "augment", source_id)``).
    """
    state = seed & _MASK64
    for token in tokens:
        state = _mix(state ^ _fnv1a(token))
    return SplitMix64(state)

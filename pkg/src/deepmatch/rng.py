"""Deterministic 64-bit PRNG used for weight generation and seed derivation.

The generator is a splitmix64 stream: a 64-bit counter advanced by the
golden-gamma constant, finalized with two xor-multiply mixing rounds.  It is
fully specified here so that independently written implementations produce
bit-identical weights and derived seeds.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """One splitmix64 finalization round on a 64-bit value."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """Seeded splitmix64 stream of 64-bit integers and unit-interval floats."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return mix64(self.state)

    def next_centered(self) -> float:
        """Uniform float in [-0.5, 0.5), using the top 53 bits."""
        return (self.next_u64() >> 11) / float(1 << 53) - 0.5


def derive_seed(base: int, *components: int) -> int:
    """Mix a base seed with integer components into a new 64-bit seed.

    Order-sensitive: derive_seed(s, a, b) != derive_seed(s, b, a) in general.
    """
    state = mix64(base)
    for c in components:
        state = mix64(state ^ mix64(c & _MASK))
    return state

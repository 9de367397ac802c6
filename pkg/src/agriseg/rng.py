"""Fixed, documented pseudo-random primitives for reproducible pipelines.

Everything random in this package flows through the generator defined here,
never through ``random`` or NumPy's default generators, so identical seeds
give identical outputs on every platform and under any degree of parallelism.

The algorithm is SplitMix64 and is frozen for the life of the on-disk
formats. The state is a 64-bit integer; a draw advances the state by the odd
constant 0x9E3779B97F4A7C15 and returns ``mix64`` of the new state, where
``mix64`` is the finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

with all arithmetic mod 2**64. Draw ``i`` (0-based) from seed ``s`` is
therefore the pure function ``mix64(s + (i + 1) * GAMMA)``, which is what the
vectorized helpers evaluate; the scalar and vector views of one stream are
bit-identical.

Independent streams are derived with :func:`derive_seed`, which folds integer
and string labels into the seed through ``mix64``. Per-tile work keys its
stream off (seed, purpose, tile index) alone, so the schedule that tiles run
under cannot change any output.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python integer (taken mod 2**64)."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX_A) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX_B) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def mix64_array(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    z = x.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX_A)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX_B)
    z ^= z >> np.uint64(31)
    return z


def _fold(label) -> int:
    if isinstance(label, (int, np.integer)):
        return mix64(int(label))
    if isinstance(label, str):
        h = _FNV_OFFSET
        for byte in label.encode("utf-8"):
            h = ((h ^ byte) * _FNV_PRIME) & _MASK64
        return h
    raise TypeError(f"cannot fold {type(label).__name__} into a seed")


def derive_seed(seed: int, *labels) -> int:
    """Derive an independent stream seed from a base seed and labels."""
    h = mix64(seed)
    for label in labels:
        h = mix64((h + _GAMMA) ^ _fold(label))
    return h


def u64_stream(seed: int, count: int) -> np.ndarray:
    """First ``count`` draws of the stream for ``seed`` as a uint64 array.

    Bit-identical to ``count`` successive :meth:`SplitMix64.next_u64` calls.
    """
    idx = np.arange(1, count + 1, dtype=np.uint64)
    return mix64_array(np.uint64(seed & _MASK64) + idx * np.uint64(_GAMMA))


def unit_floats(bits: np.ndarray) -> np.ndarray:
    """Map uint64 draws to float64 values in [0, 1) using the top 53 bits."""
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


class SplitMix64:
    """Sequential view of the stream; draw i equals ``u64_stream(seed, n)[i]``."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return mix64(self._state)

    def uniform(self) -> float:
        """Float in [0, 1) from the top 53 bits of the next draw."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def below(self, n: int) -> int:
        """Integer in [0, n) via the multiply-high reduction.

        Bias is bounded by n / 2**64, which is irrelevant at the scales used
        here and, unlike rejection sampling, keeps the draw count fixed.
        """
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        return (self.next_u64() * n) >> 64

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, seq):
        return seq[self.below(len(seq))]

    def spawn(self, *labels) -> "SplitMix64":
        """Child generator keyed off the current state and the labels."""
        return SplitMix64(derive_seed(self._state, *labels))

"""Bit streams and the differential light-switching schedule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from specmark.optimizer import SpectraPair

STATE_1 = 0
STATE_2 = 1

DEFAULT_SYMBOL_RATE_HZ = 15.0


@dataclass(frozen=True)
class BitStream:
    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits:
            raise ValueError("bit stream is empty")
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    @classmethod
    def random(cls, n: int, seed: int) -> "BitStream":
        if n < 1:
            raise ValueError("need at least one bit")
        rng = np.random.default_rng(seed)
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=n)))


@dataclass(frozen=True, eq=False)
class LightSchedule:
    """Illumination state per symbol slot; state ``k`` is lit during ``[k, k+1) / symbol_rate_hz``."""

    symbol_rate_hz: float
    states: tuple[int, ...]
    pair: SpectraPair | None = None

    def __post_init__(self):
        if not self.symbol_rate_hz > 0:
            raise ValueError("symbol rate must be positive")
        states = tuple(int(s) for s in self.states)
        if len(states) < 2:
            raise ValueError("a schedule carries at least one bit (two states)")
        if any(s not in (STATE_1, STATE_2) for s in states):
            raise ValueError("unknown illumination state")
        object.__setattr__(self, "states", states)

    @property
    def n_bits(self) -> int:
        return len(self.states) - 1

    @property
    def duration_s(self) -> float:
        return len(self.states) / self.symbol_rate_hz

    def bits(self) -> BitStream:
        s = np.array(self.states)
        return BitStream(tuple(int(v) for v in (s[1:] != s[:-1])))


def encode(
    bits: BitStream | Sequence[int],
    symbol_rate_hz: float = DEFAULT_SYMBOL_RATE_HZ,
    pair: SpectraPair | None = None,
) -> LightSchedule:
    """Differential encoding: a 1 toggles the light, a 0 keeps it."""
    stream = bits if isinstance(bits, BitStream) else BitStream(tuple(bits))
    toggles = stream.as_array()
    states = np.concatenate([[STATE_1], np.cumsum(toggles) % 2])
    return LightSchedule(symbol_rate_hz, tuple(int(s) for s in states), pair)

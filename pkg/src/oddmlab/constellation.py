"""Gray-mapped QAM constellations with unit average energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidParameterError

__all__ = ["Constellation", "qam4"]


@dataclass(frozen=True, eq=False)
class Constellation:
    """A labelled point set with a fixed bit labelling.

    ``labels[i]`` is the integer whose ``bits_per_symbol`` bits (MSB first)
    map to ``points[i]``.
    """

    label: str
    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        lab = np.asarray(self.labels, dtype=int).ravel()
        if pts.size < 2 or pts.size & (pts.size - 1):
            raise InvalidParameterError("constellation size must be a power of two >= 2")
        if sorted(lab.tolist()) != list(range(pts.size)):
            raise InvalidParameterError("labels must be a permutation of 0..size-1")
        pts.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.size))

    def _order(self) -> np.ndarray:
        # point index for each integer label
        order = np.empty(self.size, dtype=int)
        order[self.labels] = np.arange(self.size)
        return order

    def map_bits(self, bits) -> np.ndarray:
        """Map a flat bit array (length a multiple of ``bits_per_symbol``) to points."""
        b = np.asarray(bits, dtype=int).ravel()
        k = self.bits_per_symbol
        if b.size % k:
            raise InvalidParameterError(f"bit count {b.size} is not a multiple of {k}")
        ints = b.reshape(-1, k) @ (1 << np.arange(k - 1, -1, -1))
        return self.points[self._order()[ints]]

    def nearest(self, symbols) -> np.ndarray:
        """Index of the nearest point for each symbol (same shape as input)."""
        s = np.asarray(symbols, dtype=complex)
        d = np.abs(s[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    def slice(self, symbols) -> np.ndarray:
        return self.points[self.nearest(symbols)]

    def demap(self, symbols) -> np.ndarray:
        """Hard-decision bits (flattened row-major) for the nearest points."""
        ints = self.labels[self.nearest(symbols)].ravel()
        k = self.bits_per_symbol
        return ((ints[:, None] >> np.arange(k - 1, -1, -1)) & 1).ravel()

    def random_symbols(self, shape, rng: np.random.Generator):
        """Draw uniform random bits and their symbols; returns ``(bits, symbols)``."""
        n = int(np.prod(shape))
        bits = rng.integers(0, 2, size=n * self.bits_per_symbol)
        return bits, self.map_bits(bits).reshape(shape)


def qam4() -> Constellation:
    """Gray 4-QAM: bit 0 picks the sign of the real part, bit 1 the imaginary part."""
    pts = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)
    return Constellation("4-QAM", pts, np.arange(4))

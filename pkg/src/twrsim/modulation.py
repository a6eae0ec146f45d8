"""PSK constellations with Gray bit labels.

Both users modulate unit-energy, zero-mean PSK sets that are closed under
multiplication (roots of unity), so differentially encoded symbols stay on
the constellation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PskConstellation:
    """A Q-ary PSK set ``exp(2j*pi*k/Q)`` with Gray-coded bit labels."""

    order: int
    points: np.ndarray = field(repr=False)
    bit_labels: np.ndarray = field(repr=False)

    @classmethod
    def from_order(cls, order: int) -> "PskConstellation":
        if order < 2 or order & (order - 1):
            raise ValueError(f"PSK order must be a power of two >= 2, got {order}")
        k = np.arange(order)
        points = np.exp(2j * np.pi * k / order)
        # snap the axis-aligned points ({+-1, +-j} for QPSK) to exact values
        points = np.round(points, 15)
        labels = k ^ (k >> 1)
        return cls(order=order, points=points, bit_labels=labels)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    def index_of(self, symbols: np.ndarray) -> np.ndarray:
        """Map symbols to constellation indices (nearest point)."""
        dist = np.abs(np.asarray(symbols)[..., None] - self.points)
        idx = np.argmin(dist, axis=-1)
        if not np.allclose(np.take(self.points, idx), symbols, atol=1e-9):
            raise ValueError("symbol not on the constellation")
        return idx

    def is_closed_under_multiplication(self, tol: float = 1e-12) -> bool:
        prod = self.points[:, None] * self.points[None, :]
        dist = np.abs(prod[..., None] - self.points)
        return bool(np.all(dist.min(axis=-1) < tol))

    def bit_errors(self, idx_a: np.ndarray, idx_b: np.ndarray) -> int:
        """Total Hamming distance between the Gray labels of two index arrays."""
        diff = self.bit_labels[np.asarray(idx_a)] ^ self.bit_labels[np.asarray(idx_b)]
        count = 0
        for b in range(self.bits_per_symbol):
            count += int(np.count_nonzero(diff & (1 << b)))
        return count


def cross_second_moment(const_a: PskConstellation, const_b: PskConstellation) -> float:
    """Mean of ``|b - a|^2`` over all pairs of the two constellations.

    For any pair of zero-mean unit-energy sets this evaluates to 2; it is
    computed exactly from the point sets rather than assumed.
    """
    diff = const_b.points[:, None] - const_a.points[None, :]
    return float(np.mean(np.abs(diff) ** 2))

"""Stateless complex-block primitives used by every layer of the simulator.

All functions operate on the last axis of complex ndarrays, so a whole frame
of OFDM blocks (shape ``(M, N)``) is processed in one call.  The DFT pair is
unitary (``1/sqrt(N)`` both ways), hence norm-preserving.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CpBlock:
    """One or more payload blocks with a cyclic prefix attached.

    ``samples`` has shape ``(..., N + cp_len)``; the first ``cp_len`` samples
    of each block replicate its last ``cp_len`` payload samples.
    """

    samples: np.ndarray
    cp_len: int

    @property
    def payload_len(self) -> int:
        return self.samples.shape[-1] - self.cp_len


def dft(x: np.ndarray) -> np.ndarray:
    """Unitary DFT along the last axis."""
    x = np.asarray(x)
    return np.fft.fft(x, axis=-1) / np.sqrt(x.shape[-1])


def idft(spectrum: np.ndarray) -> np.ndarray:
    """Unitary inverse DFT along the last axis."""
    spectrum = np.asarray(spectrum)
    return np.fft.ifft(spectrum, axis=-1) * np.sqrt(spectrum.shape[-1])


def conj_time_reverse(x: np.ndarray) -> np.ndarray:
    """Conjugate and circularly time-reverse a block.

    ``out[n] = conj(x[(-n) mod N])``, so the first sample maps onto itself
    and the DFT of the output equals the conjugated DFT of the input.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    idx = (-np.arange(n)) % n
    return np.conj(x[..., idx])


def apply_cyclic_delay(x: np.ndarray, delay: int) -> np.ndarray:
    """Circular shift by ``delay`` samples: ``out[n] = x[(n - delay) mod N]``."""
    x = np.asarray(x)
    n = x.shape[-1]
    if not 0 <= delay < n:
        raise ValueError(f"delay must satisfy 0 <= delay < {n}, got {delay}")
    return np.roll(x, delay, axis=-1)


def delay_phases(n: int, delay: int | np.ndarray) -> np.ndarray:
    """Per-subcarrier phase ramp equivalent to a circular delay.

    Subcarrier ``k`` (0-based) of a block delayed by ``d`` samples is rotated
    by ``exp(-2j*pi*k*d/N)``.
    """
    k = np.arange(n)
    return np.exp(-2j * np.pi * k * np.asarray(delay) / n)


def add_cp(x: np.ndarray, cp_len: int) -> CpBlock:
    """Prepend the last ``cp_len`` payload samples as a cyclic prefix."""
    x = np.asarray(x)
    n = x.shape[-1]
    if cp_len < 0:
        raise ValueError(f"cp_len must be non-negative, got {cp_len}")
    if cp_len > n:
        raise ValueError(f"cp_len {cp_len} exceeds block length {n}")
    if cp_len == 0:
        return CpBlock(samples=x.copy(), cp_len=0)
    samples = np.concatenate([x[..., n - cp_len:], x], axis=-1)
    return CpBlock(samples=samples, cp_len=cp_len)


def remove_cp(block: CpBlock) -> np.ndarray:
    """Drop the cyclic prefix, returning the payload samples."""
    return block.samples[..., block.cp_len:]


def project_onto_lags(values: np.ndarray, max_lag: int) -> np.ndarray:
    """Project per-subcarrier sequences onto a limited circular lag support.

    A frequency response built from an L-tap channel only occupies lags
    ``|l| <= L - 1`` of the inverse DFT along the subcarrier axis, so zeroing
    everything outside that support removes estimation noise without biasing
    the underlying sequence.
    """
    values = np.asarray(values)
    n = values.shape[-1]
    if not 0 <= max_lag <= n // 2:
        raise ValueError(f"max_lag must lie in [0, {n // 2}], got {max_lag}")
    lags = np.fft.ifft(values, axis=-1)
    keep = np.zeros(n, dtype=bool)
    keep[: max_lag + 1] = True
    if max_lag > 0:
        keep[n - max_lag:] = True
    return np.fft.fft(lags * keep, axis=-1)


def circular_convolve(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Circular convolution of each block with a tap sequence.

    Equivalent to multiplying by the circulant matrix whose first column is
    the zero-padded tap vector; in the frequency domain each subcarrier is
    scaled by the (unnormalized) DFT of the taps.
    """
    x = np.asarray(x)
    taps = np.asarray(taps)
    n = x.shape[-1]
    if taps.ndim != 1 or taps.size == 0:
        raise ValueError("taps must be a non-empty 1-D sequence")
    if taps.size > n:
        raise ValueError(f"tap count {taps.size} exceeds block length {n}")
    gains = np.fft.fft(taps, n=n)
    return np.fft.ifft(np.fft.fft(x, axis=-1) * gains, axis=-1)

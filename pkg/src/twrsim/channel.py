"""Quasi-static frequency-selective Rayleigh links with integer delays.

A link is a tapped delay line drawn once per frame plus an integer
propagation delay.  Applying a link performs true linear convolution on the
CP-extended blocks; provided the prefix covers ``taps - 1 + delay`` samples,
the payload seen after CP removal equals the circular model
``circulant(taps) @ cyclic_delay(payload)``, which is what the per-subcarrier
analysis relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import CpBlock

DEFAULT_PROFILE = (1.0 / np.sqrt(2.0), 0.8 / np.sqrt(2.0), 0.6 / np.sqrt(2.0))


class CpUnderrunError(ValueError):
    """Raised when a cyclic prefix is too short for a link's spread + delay."""


@dataclass(frozen=True)
class PowerDelayProfile:
    """Per-lag amplitude standard deviations of a tapped delay line."""

    tap_stddevs: tuple[float, ...]

    def __post_init__(self):
        if len(self.tap_stddevs) == 0:
            raise ValueError("profile must have at least one tap")
        if any(s <= 0 for s in self.tap_stddevs):
            raise ValueError("tap standard deviations must be positive")

    @property
    def n_taps(self) -> int:
        return len(self.tap_stddevs)

    @property
    def total_power(self) -> float:
        return float(sum(s**2 for s in self.tap_stddevs))

    def is_normalized(self, tol: float = 1e-12) -> bool:
        return abs(self.total_power - 1.0) <= tol

    @classmethod
    def normalized(cls, weights) -> "PowerDelayProfile":
        w = np.asarray(weights, dtype=float)
        scale = np.sqrt(np.sum(w**2))
        return cls(tap_stddevs=tuple(w / scale))


@dataclass(frozen=True)
class LinkChannel:
    """One directed link: complex tap gains plus an integer sample delay."""

    taps: np.ndarray
    delay: int
    link_id: tuple[str, str]

    @property
    def n_taps(self) -> int:
        return len(self.taps)


@dataclass(frozen=True)
class ChannelSet:
    """All user<->relay links of one frame, keyed by (from_node, to_node)."""

    links: dict
    reciprocal: bool

    def link(self, from_node: str, to_node: str) -> LinkChannel:
        return self.links[(from_node, to_node)]


def relay_name(index: int) -> str:
    return f"R{index + 1}"


def sample_link(
    profile: PowerDelayProfile,
    delay: int,
    rng: np.random.Generator,
    link_id: tuple[str, str] = ("?", "?"),
) -> LinkChannel:
    """Draw one circularly-symmetric complex Gaussian tap per lag."""
    sigmas = np.asarray(profile.tap_stddevs)
    gauss = rng.standard_normal((2, profile.n_taps))
    taps = sigmas * (gauss[0] + 1j * gauss[1]) / np.sqrt(2.0)
    return LinkChannel(taps=taps, delay=int(delay), link_id=link_id)


def apply_link(block: CpBlock, link: LinkChannel) -> CpBlock:
    """Propagate CP blocks through a link (delay + linear convolution).

    The output keeps the transmitter's frame timing, truncated to the frame
    length; energy that spills past a block lands inside the next block's
    prefix and is discarded there, so blocks can be processed independently.
    """
    spread = link.n_taps - 1 + link.delay
    if block.cp_len < spread:
        raise CpUnderrunError(
            f"cyclic prefix {block.cp_len} shorter than channel spread {spread} "
            f"on link {link.link_id}"
        )
    u = block.samples
    frame_len = u.shape[-1]
    out = np.zeros(u.shape[:-1] + (frame_len + spread,), dtype=complex)
    for lag, gain in enumerate(link.taps):
        if gain != 0:
            start = link.delay + lag
            out[..., start : start + frame_len] += gain * u
    return CpBlock(samples=out[..., :frame_len], cp_len=block.cp_len)


def freq_response(link: LinkChannel, n: int) -> np.ndarray:
    """Per-subcarrier gains of the tap sequence (delay phase excluded).

    Returns ``q_k = sum_l taps[l] * exp(-2j*pi*k*l/N)``, the diagonal of the
    circulant tap matrix in the DFT basis.  The integer propagation delay
    contributes a separate per-subcarrier phase ramp, accounted for by
    :func:`twrsim.dsp.delay_phases`.
    """
    return np.fft.fft(link.taps, n=n)


def add_noise(x: np.ndarray, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. circularly-symmetric complex Gaussian noise per sample."""
    if variance < 0:
        raise ValueError(f"noise variance must be non-negative, got {variance}")
    if variance == 0:
        return x
    gauss = rng.standard_normal((2,) + np.shape(x))
    return x + np.sqrt(variance / 2.0) * (gauss[0] + 1j * gauss[1])

"""Per-subcarrier differential two-way relaying with blind cancellation.

Each user runs N parallel differential PSK encoders (one per subcarrier).
Relays conjugate and time-reverse the superimposed uplink, which turns into
plain conjugation per subcarrier, so the signal received back at a user is

    Y_k = self_gain_k * conj(own_symbol_k) + partner_gain_k * conj(partner_symbol_k) + noise

with composite gains that are constant over a quasi-static frame.  The user
estimates the magnitude of the partner gain from block differences, deduces
its own self gain from the received power, cancels the self term, and
differentially detects the partner's symbols without any channel knowledge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, LinkChannel, add_noise, apply_link, freq_response, relay_name, sample_link
from .config import USERS, SimConfig
from .dsp import (
    CpBlock,
    add_cp,
    conj_time_reverse,
    delay_phases,
    dft,
    idft,
    project_onto_lags,
    remove_cp,
)
from .modulation import PskConstellation, cross_second_moment


def other_user(user: str) -> str:
    if user not in USERS:
        raise ValueError(f"unknown user {user!r}")
    return "B" if user == "A" else "A"


# ---------------------------------------------------------------------------
# encoding and node processing
# ---------------------------------------------------------------------------


def diff_encode(data: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Differentially encode a frame of symbols, one chain per subcarrier.

    ``data`` holds the information symbols of blocks 2..M (shape
    ``(M-1, N)``); the returned chain has shape ``(M, N)`` with row 1 equal
    to ``reference``.
    """
    data = np.asarray(data)
    reference = np.asarray(reference)
    if np.any(np.abs(np.abs(data) - 1.0) > 1e-9):
        raise ValueError("data symbols must be unit magnitude (PSK)")
    chain = np.empty((data.shape[0] + 1,) + reference.shape, dtype=complex)
    chain[0] = reference
    np.cumprod(data, axis=0, out=chain[1:])
    chain[1:] *= reference
    return chain


def user_transmit(chain: np.ndarray, power: float, cp_len: int) -> CpBlock:
    """IDFT each encoded block, scale to transmit power, append the prefix."""
    return add_cp(np.sqrt(power) * idft(chain), cp_len)


def relay_process(y: np.ndarray, relay_power: float, relay_gain: float, cp_len: int) -> CpBlock:
    """Amplify-and-forward with conjugation and time reversal (scalar gain)."""
    scaled = np.sqrt(relay_power * relay_gain) * conj_time_reverse(y)
    return add_cp(scaled, cp_len)


def relay_process_per_subcarrier(
    y: np.ndarray, relay_power: float, subcarrier_gains: np.ndarray, cp_len: int
) -> CpBlock:
    """Conjugate-and-forward with per-subcarrier power normalization.

    Equivalent to :func:`relay_process` when the gains are flat, but shapes
    each subcarrier individually, which requires frequency-domain processing
    at the relay (analysis mode only).
    """
    spectrum = dft(y)
    shaped = np.sqrt(relay_power * subcarrier_gains) * np.conj(spectrum)
    return add_cp(idft(shaped), cp_len)


def per_subcarrier_gains(
    q_from_a: np.ndarray, q_from_b: np.ndarray, power_a: float, power_b: float, noise_var: float
) -> np.ndarray:
    """Relay gains that normalize each subcarrier's average received power."""
    if noise_var <= 0:
        raise ValueError("per-subcarrier normalization needs a positive noise variance")
    return 1.0 / (power_a * np.abs(q_from_a) ** 2 + power_b * np.abs(q_from_b) ** 2 + noise_var)


def effective_relay_gains(cfg: SimConfig, channels: ChannelSet, sigma2: float) -> np.ndarray:
    """Per-relay, per-subcarrier gain field ``(n_relays, N)`` for this frame."""
    n = cfg.n_subcarriers
    if cfg.gain_mode == "per_subcarrier":
        rows = []
        for r in range(cfg.n_relays):
            rname = relay_name(r)
            q_a = freq_response(channels.link("A", rname), n)
            q_b = freq_response(channels.link("B", rname), n)
            rows.append(per_subcarrier_gains(q_a, q_b, cfg.power_a, cfg.power_b, sigma2))
        return np.asarray(rows)
    scalars = cfg.resolved_relay_gains(sigma2)
    return np.repeat(np.asarray(scalars)[:, None], n, axis=1)


# ---------------------------------------------------------------------------
# composite-gain oracle (genie knowledge, also the test reference)
# ---------------------------------------------------------------------------


def composite_gains(
    cfg: SimConfig, channels: ChannelSet, relay_gain_field: np.ndarray, at_user: str
) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-subcarrier (self_gain, partner_gain) at ``at_user``.

    The self gain is the real, non-negative coefficient of the user's own
    conjugated symbols; the partner gain is the complex coefficient of the
    partner's, including the residual delay phases.  Requires reciprocal
    channels, which is what makes the self gain real.
    """
    if not channels.reciprocal:
        raise ValueError("composite gains are only defined for reciprocal channels")
    n = cfg.n_subcarriers
    partner = other_user(at_user)
    powers = {"A": cfg.power_a, "B": cfg.power_b}
    relay_powers = cfg.resolved_relay_powers()
    self_gain = np.zeros(n)
    partner_gain = np.zeros(n, dtype=complex)
    for r in range(cfg.n_relays):
        rname = relay_name(r)
        amp_field = relay_powers[r] * relay_gain_field[r]
        q_down = freq_response(channels.link(rname, at_user), n)
        d_down = channels.link(rname, at_user).delay
        q_self = freq_response(channels.link(at_user, rname), n)
        q_partner = freq_response(channels.link(partner, rname), n)
        d_partner = channels.link(partner, rname).delay
        self_gain += np.sqrt(powers[at_user] * amp_field) * np.abs(q_self) ** 2
        partner_gain += (
            np.sqrt(powers[partner] * amp_field)
            * q_down
            * np.conj(q_partner)
            * delay_phases(n, d_down - d_partner)
        )
    return self_gain, partner_gain


# ---------------------------------------------------------------------------
# blind estimation, cancellation, detection
# ---------------------------------------------------------------------------


def estimate_partner_gain_abs(
    received: np.ndarray,
    own_data: np.ndarray,
    own_const: PskConstellation,
    partner_const: PskConstellation,
) -> np.ndarray:
    """Blind estimate of the partner composite-gain magnitude.

    Differencing consecutive blocks with the user's own known data removes
    the self term; the residual power is proportional to the squared partner
    gain through the exact cross-constellation second moment.
    """
    y = np.asarray(received)
    x = np.asarray(own_data)
    m = y.shape[0]
    if m < 2:
        raise ValueError("at least two blocks are required")
    diffed = np.conj(x) * y[:-1] - y[1:]
    moment = cross_second_moment(partner_const, own_const)
    gain_sq = np.sum(np.abs(diffed) ** 2, axis=0) / ((m - 1) * moment)
    return np.sqrt(gain_sq)


def estimate_self_gain(received: np.ndarray, partner_gain_abs_sq: np.ndarray) -> np.ndarray:
    """Self-gain estimate from received power, clamped at zero."""
    power = np.mean(np.abs(np.asarray(received)) ** 2, axis=0)
    return np.sqrt(np.clip(power - partner_gain_abs_sq, 0.0, None))


def cancel_self_interference(
    received: np.ndarray, own_chain: np.ndarray, self_gain: np.ndarray
) -> np.ndarray:
    """Subtract the (estimated) self term ``self_gain * conj(own_chain)``."""
    return received - self_gain * np.conj(own_chain)


def smooth_self_gain(self_gain: np.ndarray, n_taps: int) -> np.ndarray:
    """Denoise per-subcarrier self-gain estimates via their exact lag support.

    With flat relay gains the true self gain is a sum of squared-magnitude
    L-tap frequency responses, so it occupies only lags ``|l| <= L - 1``
    along the subcarrier axis and is real; the per-subcarrier estimation
    errors are white across subcarriers, so this projection removes most of
    them without biasing the true value.  Not applicable when the relays
    shape individual subcarriers.
    """
    projected = np.real(project_onto_lags(self_gain, n_taps - 1))
    return np.clip(projected, 0.0, None)


def refine_self_gain(
    received: np.ndarray,
    own_chain: np.ndarray,
    partner_chain_hat: np.ndarray,
    fallback: np.ndarray,
) -> np.ndarray:
    """Decision-directed self-gain refinement via per-subcarrier least squares.

    Given a reconstructed partner chain, jointly fits the two composite gains
    to all received blocks; the fit error is then noise-limited instead of
    data-limited, which is what lets the blind receiver track the genie-aided
    one at high SNR.  Near-singular fits (the two chains almost collinear)
    fall back to the moment-based estimate.
    """
    y = np.asarray(received)
    m = y.shape[0]
    a = np.conj(own_chain)
    b = np.conj(partner_chain_hat)
    # normal equations of [a b] @ [mu nu]^T = y; a^H a = b^H b = m exactly
    gab = np.sum(np.conj(a) * b, axis=0)
    ra = np.sum(np.conj(a) * y, axis=0)
    rb = np.sum(np.conj(b) * y, axis=0)
    det = m * m - np.abs(gab) ** 2
    safe = det > 1e-3 * m * m
    mu = np.where(safe, np.real(m * ra - gab * rb) / np.where(safe, det, 1.0), fallback)
    return np.clip(mu, 0.0, None)


def differential_detect(cancelled: np.ndarray, constellation: PskConstellation) -> np.ndarray:
    """Symbol-wise ML differential detection on self-cancelled blocks.

    Returns constellation indices of the partner's data, blocks 2..M.  Ties
    resolve to the lowest constellation index.
    """
    if cancelled.shape[0] < 2:
        raise ValueError("at least two blocks are required")
    corr = cancelled[1:] * np.conj(cancelled[:-1])
    metric = np.real(corr[..., None] * constellation.points)
    return np.argmax(metric, axis=-1)


def detection_residual(
    cancelled: np.ndarray, detected: np.ndarray, constellation: PskConstellation
) -> np.ndarray:
    """Accumulated decision residual per subcarrier.

    Measures how well the cancelled blocks obey the differential recurrence
    under the detected symbols; residual self-interference inflates it, which
    makes it a reliable per-subcarrier arbiter between candidate self-gain
    estimates.
    """
    predicted = np.conj(constellation.points[detected]) * cancelled[:-1]
    return np.sum(np.abs(cancelled[1:] - predicted) ** 2, axis=0)


def coherent_detect(
    cancelled: np.ndarray,
    partner_gain: np.ndarray,
    partner_chain: np.ndarray,
    constellation: PskConstellation,
) -> np.ndarray:
    """Coherent baseline: ML detection with known gain and running reference.

    Uses the exact partner gain and the true previous chain symbol, so noise
    enters each decision once instead of twice.
    """
    target = partner_gain * np.conj(partner_chain[:-1])
    resid = cancelled[1:, ..., None] - np.conj(constellation.points) * target[..., None]
    metric = np.abs(resid) ** 2
    return np.argmin(metric, axis=-1)


def analytic_ber(first_hop_snr: float, second_hop_snr: float) -> float:
    """High-SNR closed-form BER approximation for the BPSK scheme."""
    if first_hop_snr <= 0 or second_hop_snr <= 0:
        raise ValueError("per-hop SNRs must be positive")
    return 1.0 / first_hop_snr + 0.5 / second_hop_snr


# ---------------------------------------------------------------------------
# frame simulation
# ---------------------------------------------------------------------------


@dataclass
class JbdFrame:
    """Everything one simulated frame produced, per user."""

    cfg: SimConfig
    sigma2: float
    constellation: PskConstellation
    channels: ChannelSet
    relay_gain_field: np.ndarray
    data_idx: dict
    chains: dict
    received: dict


def sample_channel_set(cfg: SimConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw all user<->relay links for one frame in a fixed order."""
    profile = cfg.power_delay_profile
    links = {}
    for r in range(cfg.n_relays):
        rname = relay_name(r)
        for user in USERS:
            up_delay = cfg.uplink_delays(user)[r]
            down_delay = cfg.resolved_downlink_delays(user)[r]
            up = sample_link(profile, up_delay, rng, (user, rname))
            links[(user, rname)] = up
            if cfg.reciprocal:
                links[(rname, user)] = LinkChannel(
                    taps=up.taps, delay=down_delay, link_id=(rname, user)
                )
            else:
                links[(rname, user)] = sample_link(profile, down_delay, rng, (rname, user))
    return ChannelSet(links=links, reciprocal=cfg.reciprocal)


def simulate_jbd_frame(
    cfg: SimConfig,
    sigma2: float,
    rng: np.random.Generator,
    channels: ChannelSet | None = None,
) -> JbdFrame:
    """Run the full two-phase pipeline for one quasi-static frame.

    ``channels`` overrides the per-frame draw (fixed-channel experiments).
    """
    const = PskConstellation.from_order(cfg.psk_order)
    if channels is None:
        channels = sample_channel_set(cfg, rng)
    gain_field = effective_relay_gains(cfg, channels, sigma2)
    m, n = cfg.n_blocks, cfg.n_subcarriers
    cp1, cp2 = cfg.resolved_cp_uplink(), cfg.resolved_cp_downlink()
    relay_powers = cfg.resolved_relay_powers()

    data_idx, chains, tx = {}, {}, {}
    for user, power in (("A", cfg.power_a), ("B", cfg.power_b)):
        idx = rng.integers(0, const.order, size=(m - 1, n))
        chain = diff_encode(const.points[idx], np.ones(n))
        data_idx[user], chains[user] = idx, chain
        tx[user] = user_transmit(chain, power, cp1)

    relay_tx = []
    for r in range(cfg.n_relays):
        rname = relay_name(r)
        y = np.zeros((m, n), dtype=complex)
        for user in USERS:
            y = y + remove_cp(apply_link(tx[user], channels.link(user, rname)))
        y = add_noise(y, sigma2, rng)
        if cfg.gain_mode == "per_subcarrier":
            relay_tx.append(
                relay_process_per_subcarrier(y, relay_powers[r], gain_field[r], cp2)
            )
        else:
            relay_tx.append(relay_process(y, relay_powers[r], float(gain_field[r, 0]), cp2))

    received = {}
    for user in USERS:
        y = np.zeros((m, n), dtype=complex)
        for r in range(cfg.n_relays):
            y = y + remove_cp(apply_link(relay_tx[r], channels.link(relay_name(r), user)))
        y = add_noise(y, sigma2, rng)
        received[user] = dft(y)

    return JbdFrame(
        cfg=cfg,
        sigma2=sigma2,
        constellation=const,
        channels=channels,
        relay_gain_field=gain_field,
        data_idx=data_idx,
        chains=chains,
        received=received,
    )


def detect_frame(frame: JbdFrame, user: str, detector: str) -> np.ndarray:
    """Detect the partner's data at ``user``; returns indices ``(M-1, N)``."""
    const = frame.constellation
    partner = other_user(user)
    y = frame.received[user]
    if detector in ("jbd", "blind"):
        cfg = frame.cfg
        smoothing = cfg.self_gain_smoothing and cfg.gain_mode != "per_subcarrier"
        partner_abs = estimate_partner_gain_abs(
            y, const.points[frame.data_idx[user]], const, const
        )
        self_gain = estimate_self_gain(y, partner_abs**2)
        if smoothing:
            self_gain = smooth_self_gain(self_gain, cfg.n_taps)
        cancelled = cancel_self_interference(y, frame.chains[user], self_gain)
        detected = differential_detect(cancelled, const)
        if not cfg.refine_passes:
            return detected
        # decision-directed refinement; a corrupted detected chain can make
        # the refit worse than the moment estimate on that subcarrier, so the
        # decision residual arbitrates per subcarrier at the end
        best_residual = detection_residual(cancelled, detected, const)
        best_detected = detected
        reference = np.ones(cfg.n_subcarriers)
        for _ in range(cfg.refine_passes):
            partner_hat = diff_encode(const.points[detected], reference)
            self_gain = refine_self_gain(y, frame.chains[user], partner_hat, self_gain)
            if smoothing:
                self_gain = smooth_self_gain(self_gain, cfg.n_taps)
            cancelled = cancel_self_interference(y, frame.chains[user], self_gain)
            detected = differential_detect(cancelled, const)
            residual = detection_residual(cancelled, detected, const)
            improved = residual < best_residual
            best_residual = np.where(improved, residual, best_residual)
            best_detected = np.where(improved, detected, best_detected)
        return best_detected
    self_gain, partner_gain = composite_gains(
        frame.cfg, frame.channels, frame.relay_gain_field, user
    )
    cancelled = cancel_self_interference(y, frame.chains[user], self_gain)
    if detector == "genie":
        return differential_detect(cancelled, const)
    if detector == "coherent":
        return coherent_detect(cancelled, partner_gain, frame.chains[partner], const)
    raise ValueError(f"unknown detector {detector!r}")


def frame_bit_errors(frame: JbdFrame, user: str, detector: str) -> int:
    detected = detect_frame(frame, user, detector)
    truth = frame.data_idx[other_user(user)]
    return frame.constellation.bit_errors(detected, truth)


def bits_per_frame(cfg: SimConfig) -> int:
    """Information bits per user per frame (the reference block carries none)."""
    const_bits = int(np.log2(cfg.psk_order))
    return (cfg.n_blocks - 1) * cfg.n_subcarriers * const_bits

"""Differential distributed space-time coding across the relays.

Symbols on one subcarrier are grouped T blocks at a time into a unitary
T x T data matrix and chained differentially.  Each relay applies a fixed
T x T dispersion matrix to the stack of received blocks, either directly
(group 1) or after conjugate time reversal (group 2), so the superposition
at a user takes the form

    Y_k = D_own_k @ g_own_k + D_partner_k @ g_partner_k + noise

where the columns of D are the dispersion matrices applied to the encoded
chains and g holds one complex path gain per relay.  The self term is
estimated blindly (no reciprocity needed), cancelled, and the partner's
codeword recovered by a differential codebook search.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .channel import ChannelSet, LinkChannel, add_noise, apply_link, freq_response, relay_name, sample_link
from .config import USERS, SimConfig
from .dsp import CpBlock, add_cp, conj_time_reverse, delay_phases, dft, idft, remove_cp
from .jbd import effective_relay_gains, other_user, sample_channel_set
from .modulation import PskConstellation


# ---------------------------------------------------------------------------
# dispersion sets and their design rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DispersionSet:
    """Per-relay unitary T x T matrices with their processing group labels.

    Group-1 relays apply their matrix to the received block stack directly;
    group-2 relays apply it to the conjugate time-reversed stack.
    """

    matrices: np.ndarray
    groups: tuple[int, ...]

    def __post_init__(self):
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ValueError("matrices must be a (n_relays, T, T) stack")
        if len(self.groups) != self.matrices.shape[0]:
            raise ValueError("one group label per relay is required")
        if any(g not in (1, 2) for g in self.groups):
            raise ValueError("group labels must be 1 or 2")

    @property
    def n_relays(self) -> int:
        return self.matrices.shape[0]

    @property
    def block_span(self) -> int:
        return self.matrices.shape[1]

    @classmethod
    def from_direct_and_reversed(cls, direct: list, reversed_: list) -> "DispersionSet":
        """Build from per-relay (direct, time-reversed) matrix pairs.

        Exactly one of the two matrices must be nonzero for each relay; the
        nonzero one selects the group.
        """
        mats, groups = [], []
        for r, (a, b) in enumerate(zip(direct, reversed_)):
            a = np.asarray(a, dtype=complex)
            b = np.asarray(b, dtype=complex)
            a_zero, b_zero = not a.any(), not b.any()
            if a_zero == b_zero:
                raise ValueError(
                    f"relay {r + 1}: exactly one of the direct/reversed matrices "
                    "must be nonzero"
                )
            mats.append(b if a_zero else a)
            groups.append(2 if a_zero else 1)
        return cls(matrices=np.asarray(mats), groups=tuple(groups))


@dataclass
class DispersionReport:
    """Outcome of checking a dispersion set against its design rules."""

    unitary_failures: list
    commute_failures: list
    hollow_failures: list

    @property
    def ok(self) -> bool:
        return not (self.unitary_failures or self.commute_failures or self.hollow_failures)

    def failures(self) -> list:
        return self.unitary_failures + self.commute_failures + self.hollow_failures


def validate_dispersion_set(
    dset: DispersionSet, codebook_matrices: np.ndarray, tol: float = 1e-10
) -> DispersionReport:
    """Check unitarity, codeword commutativity, and hollow cross-products."""
    mats = dset.matrices
    t = dset.block_span
    unitary, commute, hollow = [], [], []
    eye = np.eye(t)
    for r, o in enumerate(mats):
        if np.max(np.abs(o.conj().T @ o - eye)) > tol:
            unitary.append(f"O{r + 1} is not unitary")
    for idx, cw in enumerate(np.asarray(codebook_matrices)):
        for r, (o, group) in enumerate(zip(mats, dset.groups)):
            twisted = cw if group == 1 else np.conj(cw)
            if np.max(np.abs(cw @ o - o @ twisted)) > tol:
                commute.append(f"codeword {idx} does not commute with O{r + 1}")
    for i in range(dset.n_relays):
        for j in range(dset.n_relays):
            if i == j:
                continue
            diag = np.diagonal(mats[i].conj().T @ mats[j])
            if np.max(np.abs(diag)) > tol:
                hollow.append(f"O{i + 1}^H O{j + 1} is not hollow")
    return DispersionReport(unitary, commute, hollow)


# ---------------------------------------------------------------------------
# space-time codeword layouts
# ---------------------------------------------------------------------------


def _layout_system1(s: np.ndarray) -> np.ndarray:
    x1, x2 = s[..., 0], s[..., 1]
    out = np.empty(s.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0], out[..., 0, 1] = x1, -x2
    out[..., 1, 0], out[..., 1, 1] = x2, x1
    return out


def _layout_alamouti(s: np.ndarray) -> np.ndarray:
    x1, x2 = s[..., 0], s[..., 1]
    out = np.empty(s.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0], out[..., 0, 1] = x1, -np.conj(x2)
    out[..., 1, 0], out[..., 1, 1] = x2, np.conj(x1)
    return out


def _layout_system2(s: np.ndarray) -> np.ndarray:
    x1, x2, x3, x4 = (s[..., j] for j in range(4))
    out = np.empty(s.shape[:-1] + (4, 4), dtype=complex)
    rows = [
        (x1, -x2, -x3, -x4),
        (x2, x1, x4, -x3),
        (x3, -x4, x1, x2),
        (x4, x3, -x2, x1),
    ]
    for i, row in enumerate(rows):
        for j, entry in enumerate(row):
            out[..., i, j] = entry
    return out


def _combiner_real(basis: np.ndarray):
    def combine(curr: np.ndarray, prev: np.ndarray) -> np.ndarray:
        # g[..., j, n] = sum_{t,s} conj(curr[t]) basis[j, t, s] prev[s]
        return np.einsum("jts,...tn,...sn->...jn", basis, np.conj(curr), prev)

    return combine


def _combiner_alamouti(curr: np.ndarray, prev: np.ndarray) -> np.ndarray:
    u1, u2 = curr[..., 0, :], curr[..., 1, :]
    v1, v2 = prev[..., 0, :], prev[..., 1, :]
    g1 = np.conj(u1) * v1 + u2 * np.conj(v2)
    g2 = np.conj(u2) * v1 - u1 * np.conj(v2)
    return np.stack([g1, g2], axis=-2)


@dataclass(frozen=True)
class DstcDesign:
    """A concrete codeword layout plus its matching dispersion set."""

    name: str
    block_span: int
    n_relays: int
    real_only: bool
    dispersion: DispersionSet
    layout: callable
    combiner: callable


_ROT2 = np.array([[0.0, -1.0], [1.0, 0.0]])

_SYSTEM2_MATS = np.array(
    [
        np.eye(4),
        [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]],
        [[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]],
        [[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]],
    ],
    dtype=complex,
)


def _basis_from_layout(layout, span: int) -> np.ndarray:
    return np.stack([layout(np.eye(span)[j]) for j in range(span)])


def _make_designs() -> dict:
    designs = {}
    designs["system1"] = DstcDesign(
        name="system1",
        block_span=2,
        n_relays=2,
        real_only=True,
        dispersion=DispersionSet(
            matrices=np.stack([np.eye(2, dtype=complex), _ROT2.astype(complex)]),
            groups=(1, 1),
        ),
        layout=_layout_system1,
        combiner=_combiner_real(_basis_from_layout(_layout_system1, 2)),
    )
    designs["system2"] = DstcDesign(
        name="system2",
        block_span=4,
        n_relays=4,
        real_only=True,
        dispersion=DispersionSet(matrices=_SYSTEM2_MATS.copy(), groups=(1, 1, 1, 1)),
        layout=_layout_system2,
        combiner=_combiner_real(_basis_from_layout(_layout_system2, 4)),
    )
    designs["alamouti_complex"] = DstcDesign(
        name="alamouti_complex",
        block_span=2,
        n_relays=2,
        real_only=False,
        dispersion=DispersionSet.from_direct_and_reversed(
            direct=[np.eye(2), np.zeros((2, 2))],
            reversed_=[np.zeros((2, 2)), _ROT2],
        ),
        layout=_layout_alamouti,
        combiner=_combiner_alamouti,
    )
    return designs


_DESIGNS = _make_designs()


def get_design(name: str) -> DstcDesign:
    try:
        return _DESIGNS[name]
    except KeyError:
        raise ValueError(
            f"unknown space-time design {name!r}; available: {sorted(_DESIGNS)}"
        ) from None


def build_codeword(symbols: np.ndarray, design: str | DstcDesign) -> np.ndarray:
    """Unitary data matrix from T constellation symbols."""
    if isinstance(design, str):
        design = get_design(design)
    s = np.asarray(symbols, dtype=complex)
    if s.shape[-1] != design.block_span:
        raise ValueError(
            f"design {design.name!r} takes {design.block_span} symbols per codeword"
        )
    if design.real_only and np.max(np.abs(s.imag)) > 1e-12:
        raise ValueError(f"design {design.name!r} requires real-valued symbols")
    norm = np.sqrt(np.sum(np.abs(s) ** 2, axis=-1))
    return design.layout(s) / norm[..., None, None]


@dataclass(frozen=True)
class Codebook:
    """All codewords of a design over a constellation, in index order."""

    matrices: np.ndarray
    symbol_indices: np.ndarray

    def __len__(self) -> int:
        return self.matrices.shape[0]


def enumerate_codebook(design: str | DstcDesign, constellation: PskConstellation) -> Codebook:
    if isinstance(design, str):
        design = get_design(design)
    combos = np.array(list(product(range(constellation.order), repeat=design.block_span)))
    matrices = build_codeword(constellation.points[combos], design)
    return Codebook(matrices=matrices, symbol_indices=combos)


# ---------------------------------------------------------------------------
# group encoding and relay processing
# ---------------------------------------------------------------------------


def dstc_diff_encode(codewords: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Chain codewords onto a reference vector, per subcarrier.

    ``codewords`` has shape ``(n_groups - 1, N, T, T)``; the returned chain
    has shape ``(n_groups, T, N)`` and every chain vector keeps squared norm
    T because the codewords are unitary.
    """
    codewords = np.asarray(codewords)
    n_groups = codewords.shape[0] + 1
    n = codewords.shape[1]
    span = codewords.shape[2]
    chains = np.empty((n_groups, span, n), dtype=complex)
    chains[0] = np.broadcast_to(np.asarray(reference, dtype=complex)[:, None], (span, n))
    for m in range(1, n_groups):
        chains[m] = np.einsum("nij,jn->in", codewords[m - 1], chains[m - 1])
    return chains


def relay_process_dstc(
    blocks: np.ndarray,
    matrix: np.ndarray,
    group: int,
    relay_power: float,
    relay_gain: float,
    cp_len: int,
) -> CpBlock:
    """Mix the T received blocks of each group through a dispersion matrix.

    Group-2 relays conjugate-time-reverse each block first.  The mixing is
    identical at every sample position, so it is a single matrix product
    along the block axis.
    """
    y = np.asarray(blocks)
    if y.shape[-2] != matrix.shape[0]:
        raise ValueError("block-stack height must equal the dispersion size")
    if group == 2:
        y = conj_time_reverse(y)
    mixed = np.einsum("ij,...jn->...in", matrix, y)
    return add_cp(np.sqrt(relay_power * relay_gain) * mixed, cp_len)


def build_code_matrix(chains: np.ndarray, dispersion: DispersionSet) -> np.ndarray:
    """Per-group, per-subcarrier matrix whose r-th column is O_r applied to
    the (possibly conjugated) chain vector.

    ``chains`` is ``(n_groups, T, N)``; the result is ``(n_groups, N, T, R)``.
    """
    cols = []
    for o, group in zip(dispersion.matrices, dispersion.groups):
        source = chains if group == 1 else np.conj(chains)
        cols.append(np.einsum("ij,mjn->min", o, source))
    stacked = np.stack(cols, axis=-1)  # (n_groups, T, N, R)
    return np.transpose(stacked, (0, 2, 1, 3))


# ---------------------------------------------------------------------------
# estimation, cancellation, detection
# ---------------------------------------------------------------------------


def estimate_path_gains(code_matrices: np.ndarray, received: np.ndarray) -> np.ndarray:
    """Blind per-relay path-gain estimate ``(N, R)``.

    Averages matched-filter outputs over all groups; the hollow
    cross-products of the dispersion set make the matched filter
    asymptotically unbiased without channel reciprocity.
    """
    n_groups = received.shape[0]
    span = received.shape[1]
    return np.einsum("mntr,mtn->nr", np.conj(code_matrices), received) / (n_groups * span)


def path_gain_vector(
    cfg: SimConfig,
    channels: ChannelSet,
    relay_gain_field: np.ndarray,
    dispersion: DispersionSet,
    source_user: str,
    at_user: str,
) -> np.ndarray:
    """Exact per-relay path gains ``(N, R)`` of ``source_user``'s signal as
    observed at ``at_user``.

    Group-2 relays conjugate their uplink, flipping both the uplink gain's
    conjugation and the sign of its delay phase.
    """
    n = cfg.n_subcarriers
    powers = {"A": cfg.power_a, "B": cfg.power_b}
    relay_powers = cfg.resolved_relay_powers()
    out = np.empty((n, dispersion.n_relays), dtype=complex)
    for r in range(dispersion.n_relays):
        rname = relay_name(r)
        down = channels.link(rname, at_user)
        up = channels.link(source_user, rname)
        q_down = freq_response(down, n)
        q_up = freq_response(up, n)
        if dispersion.groups[r] == 2:
            q_up = np.conj(q_up)
            up_delay = -up.delay
        else:
            up_delay = up.delay
        amp = np.sqrt(powers[source_user] * relay_powers[r] * relay_gain_field[r])
        out[:, r] = amp * q_down * q_up * delay_phases(n, down.delay + up_delay)
    return out


def cancel_self_interference_dstc(
    received: np.ndarray, own_code_matrices: np.ndarray, self_gains: np.ndarray
) -> np.ndarray:
    """Subtract the (estimated) self space-time component."""
    return received - np.einsum("mntr,nr->mtn", own_code_matrices, self_gains)


def detect_codewords(cancelled: np.ndarray, codebook_matrices: np.ndarray) -> np.ndarray:
    """Differential codeword detection by exhaustive codebook search.

    Returns codebook indices of shape ``(n_groups - 1, N)``; ties resolve to
    the lowest codebook index.
    """
    prev, curr = cancelled[:-1], cancelled[1:]
    pred = np.einsum("kij,mjn->kmin", np.asarray(codebook_matrices), prev)
    metric = np.sum(np.abs(curr[None] - pred) ** 2, axis=-2)
    return np.argmin(metric, axis=0)


def detect_symbols_decoupled(
    cancelled: np.ndarray, design: DstcDesign, constellation: PskConstellation
) -> np.ndarray:
    """Symbol-wise differential detection via the design's orthogonality.

    Returns constellation indices of shape ``(n_groups - 1, T, N)``; equals
    the exhaustive codebook search for these orthogonal designs.
    """
    g = design.combiner(cancelled[1:], cancelled[:-1])
    metric = np.real(g[..., None] * constellation.points)
    return np.argmax(metric, axis=-1)


# ---------------------------------------------------------------------------
# pairwise error probability analysis
# ---------------------------------------------------------------------------


def delta_distance(codeword: np.ndarray, other: np.ndarray) -> float:
    """Determinant distance between two codewords."""
    diff = np.asarray(codeword) - np.asarray(other)
    return float(np.real(np.linalg.det(diff.conj().T @ diff)))


def pep_bound(
    codeword: np.ndarray,
    other: np.ndarray,
    power_a: float,
    power_b: float,
    relay_powers,
    sigma2: float,
    block_span: int,
    n_relays: int,
) -> float:
    """High-SNR upper bound on the pairwise codeword error probability."""
    delta = delta_distance(codeword, other)
    if delta <= 1e-12:
        raise ValueError("codewords must be distinct (zero determinant distance)")
    omega = (
        np.sqrt(2.0 / block_span)
        * (power_a + power_b + sigma2)
        * float(np.sum(relay_powers))
        / sigma2
    )
    if omega <= 1.0:
        raise ValueError(f"bound requires omega > 1, got {omega:.3g}")
    return float((16.0 * n_relays * np.log(omega) / (omega * block_span)) ** n_relays / delta)


@dataclass(frozen=True)
class DiversityFit:
    """Least-squares log-log slope of an error-rate curve."""

    slope: float
    nonmonotone: bool


def diversity_estimate(points) -> DiversityFit:
    """Fit the decay order of (snr_db, pep) points.

    The slope is in decades of error probability per 10 dB of SNR; zero-PEP
    points (below measurement resolution) are excluded from the fit.
    """
    pts = sorted((float(s), float(p)) for s, p in points)
    positive = [(s, p) for s, p in pts if p > 0]
    if len(positive) < 2:
        raise ValueError("need at least two positive-PEP points to fit a slope")
    snr = np.array([s for s, _ in positive])
    logp = np.log10([p for _, p in positive])
    slope = -np.polyfit(snr / 10.0, logp, 1)[0]
    nonmonotone = any(p2 > p1 for (_, p1), (_, p2) in zip(positive, positive[1:]))
    return DiversityFit(slope=float(slope), nonmonotone=nonmonotone)


# ---------------------------------------------------------------------------
# frame simulation
# ---------------------------------------------------------------------------


@dataclass
class DstcFrame:
    """One simulated space-time frame with everything the detectors need."""

    cfg: SimConfig
    sigma2: float
    constellation: PskConstellation
    design: DstcDesign
    channels: ChannelSet
    relay_gain_field: np.ndarray
    data_idx: dict
    chains: dict
    received: dict


def simulate_dstc_frame(
    cfg: SimConfig,
    sigma2: float,
    rng: np.random.Generator,
    forced_codeword_a: np.ndarray | None = None,
    channels: ChannelSet | None = None,
) -> DstcFrame:
    """Run the full two-phase space-time pipeline for one frame.

    ``forced_codeword_a`` makes user A repeat one fixed codeword in every
    group (the pairwise-error measurement protocol); user B still sends
    random data.  ``channels`` overrides the per-frame draw.
    """
    design = get_design(cfg.resolved_design())
    const = PskConstellation.from_order(cfg.psk_order)
    if channels is None:
        channels = sample_channel_set(cfg, rng)
    gain_field = effective_relay_gains(cfg, channels, sigma2)
    n, span = cfg.n_subcarriers, design.block_span
    n_groups = cfg.n_blocks // span
    cp1, cp2 = cfg.resolved_cp_uplink(), cfg.resolved_cp_downlink()
    relay_powers = cfg.resolved_relay_powers()
    reference = np.ones(span)

    data_idx, chains, tx = {}, {}, {}
    for user, power in (("A", cfg.power_a), ("B", cfg.power_b)):
        if user == "A" and forced_codeword_a is not None:
            codewords = np.broadcast_to(
                forced_codeword_a, (n_groups - 1, n, span, span)
            )
            data_idx[user] = None
        else:
            idx = rng.integers(0, const.order, size=(n_groups - 1, span, n))
            symbols = np.transpose(const.points[idx], (0, 2, 1))  # (groups-1, N, T)
            codewords = build_codeword(symbols, design)
            data_idx[user] = idx
        chain = dstc_diff_encode(codewords, reference)
        chains[user] = chain
        tx[user] = add_cp(np.sqrt(power) * idft(chain), cp1)

    relay_tx = []
    for r in range(cfg.n_relays):
        rname = relay_name(r)
        y = np.zeros((n_groups, span, n), dtype=complex)
        for user in USERS:
            y = y + remove_cp(apply_link(tx[user], channels.link(user, rname)))
        y = add_noise(y, sigma2, rng)
        relay_tx.append(
            relay_process_dstc(
                y,
                design.dispersion.matrices[r],
                design.dispersion.groups[r],
                relay_powers[r],
                float(gain_field[r, 0]),
                cp2,
            )
        )

    received = {}
    for user in USERS:
        y = np.zeros((n_groups, span, n), dtype=complex)
        for r in range(cfg.n_relays):
            y = y + remove_cp(apply_link(relay_tx[r], channels.link(relay_name(r), user)))
        y = add_noise(y, sigma2, rng)
        received[user] = dft(y)

    return DstcFrame(
        cfg=cfg,
        sigma2=sigma2,
        constellation=const,
        design=design,
        channels=channels,
        relay_gain_field=gain_field,
        data_idx=data_idx,
        chains=chains,
        received=received,
    )


def cancelled_signal(frame: DstcFrame, user: str, estimator: str) -> np.ndarray:
    """Received blocks at ``user`` with the self component removed."""
    own_code = build_code_matrix(frame.chains[user], frame.design.dispersion)
    if estimator == "blind":
        gains = estimate_path_gains(own_code, frame.received[user])
    elif estimator == "oracle":
        gains = path_gain_vector(
            frame.cfg,
            frame.channels,
            frame.relay_gain_field,
            frame.design.dispersion,
            source_user=user,
            at_user=user,
        )
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return cancel_self_interference_dstc(frame.received[user], own_code, gains)


def detect_frame_dstc(
    frame: DstcFrame,
    user: str,
    estimator: str = "blind",
    codebook: Codebook | None = None,
    decoupled: bool = False,
) -> np.ndarray:
    """Detect the partner's symbols at ``user``; returns constellation indices
    of shape ``(n_groups - 1, T, N)``."""
    cancelled = cancelled_signal(frame, user, estimator)
    if decoupled:
        return detect_symbols_decoupled(cancelled, frame.design, frame.constellation)
    if codebook is None:
        codebook = enumerate_codebook(frame.design, frame.constellation)
    cw_idx = detect_codewords(cancelled, codebook.matrices)
    symbols = codebook.symbol_indices[cw_idx]  # (groups-1, N, T)
    return np.transpose(symbols, (0, 2, 1))


def detect_pairwise(frame: DstcFrame, user: str, pair_matrices: np.ndarray) -> np.ndarray:
    """Binary-hypothesis decisions between two codewords at ``user``.

    Returns 0/1 codebook indices of shape ``(n_groups - 1, N)``.
    """
    cancelled = cancelled_signal(frame, user, "blind")
    return detect_codewords(cancelled, pair_matrices)


def frame_bit_errors_dstc(
    frame: DstcFrame,
    user: str,
    estimator: str = "blind",
    codebook: Codebook | None = None,
    decoupled: bool = False,
) -> int:
    detected = detect_frame_dstc(frame, user, estimator, codebook, decoupled)
    truth = frame.data_idx[other_user(user)]
    return frame.constellation.bit_errors(detected, truth)


def bits_per_frame_dstc(cfg: SimConfig) -> int:
    """Information bits per user per frame (the reference group carries none)."""
    design = get_design(cfg.resolved_design())
    n_groups = cfg.n_blocks // design.block_span
    const_bits = int(np.log2(cfg.psk_order))
    return (n_groups - 1) * design.block_span * cfg.n_subcarriers * const_bits

"""Monte Carlo orchestration: SNR bookkeeping, sweeps, result persistence.

Every frame draws its randomness from a substream derived from
``(seed, snr_index, frame_index)``, and the stopping rule is evaluated only
at fixed-size batch boundaries, so results are bit-identical for any worker
count.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.optimize import brentq

from .config import USERS, ConfigError, SimConfig
from .dstc import (
    build_codeword,
    bits_per_frame_dstc,
    delta_distance,
    detect_pairwise,
    enumerate_codebook,
    frame_bit_errors_dstc,
    get_design,
    pep_bound,
    simulate_dstc_frame,
)
from .jbd import bits_per_frame, frame_bit_errors, simulate_jbd_frame

# Frames are scheduled in fixed-size batches and the stopping rule is checked
# only between batches, which keeps stopping decisions independent of the
# worker count.
BATCH_FRAMES = 32

_DETECTORS = {"jbd": "blind", "genie": "genie", "coherent": "coherent"}


@dataclass(frozen=True)
class BerRecord:
    scheme: str
    user: str
    snr_db: float
    bits: int
    errors: int
    ber: float
    frames: int


@dataclass(frozen=True)
class PepRecord:
    scheme: str
    snr_db: float
    trials: int
    pairwise_errors: int
    pep: float
    bound: float


# ---------------------------------------------------------------------------
# SNR bookkeeping
# ---------------------------------------------------------------------------


def snr_at_user(cfg: SimConfig, sigma2: float, user: str) -> float:
    """Operating SNR at ``user`` while detecting the partner's signal.

    Signal power through the relays is ``sum_r(G_r P_r) * P_partner``; the
    effective noise adds the forwarded relay noise to the user's own.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    partner_power = cfg.power_b if user == "A" else cfg.power_a
    if partner_power <= 0 or cfg.power_a <= 0 or cfg.power_b <= 0:
        raise ValueError("powers must be positive")
    gains = np.asarray(cfg.resolved_relay_gains(sigma2))
    powers = np.asarray(cfg.resolved_relay_powers())
    forwarded = float(np.sum(gains * powers))
    return forwarded * partner_power / (forwarded * sigma2 + sigma2)


def sigma2_for_snr(cfg: SimConfig, snr_db: float, user: str = "B") -> float:
    """Invert the SNR axis to a physical noise variance."""
    target = 10.0 ** (snr_db / 10.0)
    partner_power = cfg.power_b if user == "A" else cfg.power_a
    if cfg.snr_axis == "per_hop":
        # first-hop SNR of the detected user's transmission
        return partner_power / target
    if cfg.gain_mode == "normalized":
        return float(
            brentq(
                lambda s2: snr_at_user(cfg, s2, user) - target,
                1e-12,
                1e9,
                xtol=1e-15,
                rtol=1e-13,
            )
        )
    gains = np.asarray(cfg.resolved_relay_gains(sigma2=1.0))  # constant in sigma2
    powers = np.asarray(cfg.resolved_relay_powers())
    forwarded = float(np.sum(gains * powers))
    return forwarded * partner_power / (target * (forwarded + 1.0))


# ---------------------------------------------------------------------------
# frame workers (top level so they pickle for process pools)
# ---------------------------------------------------------------------------


def _frame_rng(cfg: SimConfig, snr_index: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((cfg.seed, snr_index, frame_index))
    )


def _ber_frame_worker(args) -> tuple[int, int]:
    cfg, snr_index, frame_index, sigma2 = args
    rng = _frame_rng(cfg, snr_index, frame_index)
    if cfg.scheme == "jbd_dstc":
        frame = simulate_dstc_frame(cfg, sigma2, rng)
        codebook = enumerate_codebook(frame.design, frame.constellation)
        return tuple(
            frame_bit_errors_dstc(frame, user, "blind", codebook) for user in USERS
        )
    detector = _DETECTORS[cfg.scheme]
    frame = simulate_jbd_frame(cfg, sigma2, rng)
    return tuple(frame_bit_errors(frame, user, detector) for user in USERS)


def _pep_frame_worker(args) -> tuple[int, int]:
    cfg, snr_index, frame_index, sigma2, pair_matrices = args
    rng = _frame_rng(cfg, snr_index, frame_index)
    frame = simulate_dstc_frame(cfg, sigma2, rng, forced_codeword_a=pair_matrices[0])
    decisions = detect_pairwise(frame, "B", pair_matrices)
    return int(np.count_nonzero(decisions)), int(decisions.size)


def _map_batches(worker, arglist, executor):
    if executor is None:
        return [worker(args) for args in arglist]
    return list(executor.map(worker, arglist))


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("SIM_WORKERS", "")
        workers = int(env) if env.strip() else 1
    if workers < 1:
        raise ConfigError(f"worker count must be >= 1, got {workers}")
    return workers


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def run_ber_sweep(
    cfg: SimConfig, workers: int | None = None, noiseless: bool = False
) -> list[BerRecord]:
    """Measure both users' BER at every grid point.

    Each point simulates fresh quasi-static frames until both users have
    accumulated ``min_errors`` bit errors or ``max_frames`` frames ran.
    """
    cfg.validate()
    workers = resolve_workers(workers)
    per_frame_bits = (
        bits_per_frame_dstc(cfg) if cfg.scheme == "jbd_dstc" else bits_per_frame(cfg)
    )
    records: list[BerRecord] = []
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for snr_index, snr_db in enumerate(cfg.snr_grid_db):
            sigma2 = 0.0 if noiseless else sigma2_for_snr(cfg, snr_db)
            errors = {user: 0 for user in USERS}
            frames = 0
            while frames < cfg.max_frames:
                batch = range(frames, min(frames + BATCH_FRAMES, cfg.max_frames))
                results = _map_batches(
                    _ber_frame_worker,
                    [(cfg, snr_index, fi, sigma2) for fi in batch],
                    executor,
                )
                for err_a, err_b in results:
                    errors["A"] += err_a
                    errors["B"] += err_b
                frames += len(batch)
                if min(errors.values()) >= cfg.min_errors and frames >= cfg.min_frames:
                    break
            bits = frames * per_frame_bits
            for user in USERS:
                records.append(
                    BerRecord(
                        scheme=cfg.scheme,
                        user=user,
                        snr_db=float(snr_db),
                        bits=bits,
                        errors=errors[user],
                        ber=errors[user] / bits,
                        frames=frames,
                    )
                )
    finally:
        if executor is not None:
            executor.shutdown()
    return records


def run_pep_experiment(
    cfg: SimConfig,
    symbols_c,
    symbols_c_prime,
    workers: int | None = None,
    noiseless: bool = False,
) -> list[PepRecord]:
    """Pairwise-error measurement between two codewords, alongside the bound.

    User A repeats the first codeword in every group; user B runs the blind
    receiver with the detector restricted to the two hypotheses.
    """
    cfg.validate()
    if cfg.scheme != "jbd_dstc":
        raise ConfigError("pairwise-error experiments require the jbd_dstc scheme")
    workers = resolve_workers(workers)
    design = get_design(cfg.resolved_design())
    pair = np.stack(
        [
            build_codeword(np.asarray(symbols_c, dtype=complex), design),
            build_codeword(np.asarray(symbols_c_prime, dtype=complex), design),
        ]
    )
    if delta_distance(pair[0], pair[1]) <= 1e-12:
        raise ConfigError("pairwise-error codewords must be distinct")

    records: list[PepRecord] = []
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for snr_index, snr_db in enumerate(cfg.snr_grid_db):
            sigma2 = 0.0 if noiseless else sigma2_for_snr(cfg, snr_db)
            if sigma2 > 0:
                bound = pep_bound(
                    pair[0],
                    pair[1],
                    cfg.power_a,
                    cfg.power_b,
                    cfg.resolved_relay_powers(),
                    sigma2,
                    design.block_span,
                    design.n_relays,
                )
            else:
                bound = 0.0
            pair_errors = 0
            trials = 0
            frames = 0
            while frames < cfg.max_frames:
                batch = range(frames, min(frames + BATCH_FRAMES, cfg.max_frames))
                results = _map_batches(
                    _pep_frame_worker,
                    [(cfg, snr_index, fi, sigma2, pair) for fi in batch],
                    executor,
                )
                for err, n_dec in results:
                    pair_errors += err
                    trials += n_dec
                frames += len(batch)
                if pair_errors >= cfg.min_errors and frames >= cfg.min_frames:
                    break
            records.append(
                PepRecord(
                    scheme=cfg.scheme,
                    snr_db=float(snr_db),
                    trials=trials,
                    pairwise_errors=pair_errors,
                    pep=pair_errors / trials,
                    bound=bound,
                )
            )
    finally:
        if executor is not None:
            executor.shutdown()
    return records


# ---------------------------------------------------------------------------
# result persistence
# ---------------------------------------------------------------------------

_RECORD_TYPES = {"ber": BerRecord, "pep": PepRecord}


def _format_float(value: float) -> str:
    return f"{value:.10g}"


def _record_kind(records, kind: str | None) -> str:
    if records:
        return "pep" if isinstance(records[0], PepRecord) else "ber"
    return kind or "ber"


def emit_results(records, path, format: str = "csv", kind: str | None = None) -> None:
    """Write records to ``path`` as CSV (fixed column order) or JSON."""
    record_type = _RECORD_TYPES[_record_kind(records, kind)]
    names = [f.name for f in fields(record_type)]
    try:
        if format == "csv":
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(names)
                for rec in records:
                    row = []
                    for name in names:
                        value = getattr(rec, name)
                        row.append(_format_float(value) if isinstance(value, float) else value)
                    writer.writerow(row)
        elif format == "json":
            payload = []
            for rec in records:
                entry = asdict(rec)
                for key, value in entry.items():
                    if isinstance(value, float):
                        entry[key] = float(_format_float(value))
                payload.append(entry)
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
        else:
            raise ValueError(f"unknown output format {format!r}")
    except OSError as exc:
        raise OSError(f"failed to write results to {path}: {exc}") from exc


def read_results(path, format: str = "csv", kind: str = "ber") -> list:
    """Parse a results file back into records (inverse of :func:`emit_results`)."""
    record_type = _RECORD_TYPES[kind]
    casts = {f.name: f.type for f in fields(record_type)}

    def build(entry: dict):
        coerced = {}
        for name, type_name in casts.items():
            value = entry[name]
            if type_name in ("int", int):
                coerced[name] = int(value)
            elif type_name in ("float", float):
                coerced[name] = float(value)
            else:
                coerced[name] = str(value)
        return record_type(**coerced)

    if format == "csv":
        with open(path, "r", newline="", encoding="utf-8") as fh:
            return [build(row) for row in csv.DictReader(fh)]
    if format == "json":
        with open(path, "r", encoding="utf-8") as fh:
            return [build(entry) for entry in json.load(fh)]
    raise ValueError(f"unknown input format {format!r}")


def analytic_ber_table(cfg: SimConfig) -> list[tuple[float, float]]:
    """Closed-form BER values on the config's SNR grid (per-hop axis)."""
    from .jbd import analytic_ber

    rows = []
    for snr_db in cfg.snr_grid_db:
        sigma2 = sigma2_for_snr(cfg, snr_db)
        gamma1 = cfg.power_a / sigma2
        gamma2 = float(np.sum(cfg.resolved_relay_powers())) / sigma2
        rows.append((float(snr_db), analytic_ber(gamma1, gamma2)))
    return rows


def pep_bound_table(cfg: SimConfig, symbols_c, symbols_c_prime) -> list[tuple[float, float]]:
    """Pairwise-error upper bound on the config's SNR grid."""
    design = get_design(cfg.resolved_design())
    cw = build_codeword(np.asarray(symbols_c, dtype=complex), design)
    cw_prime = build_codeword(np.asarray(symbols_c_prime, dtype=complex), design)
    rows = []
    for snr_db in cfg.snr_grid_db:
        sigma2 = sigma2_for_snr(cfg, snr_db)
        rows.append(
            (
                float(snr_db),
                pep_bound(
                    cw,
                    cw_prime,
                    cfg.power_a,
                    cfg.power_b,
                    cfg.resolved_relay_powers(),
                    sigma2,
                    design.block_span,
                    design.n_relays,
                ),
            )
        )
    return rows


def emit_table(rows, path, format: str, value_column: str) -> None:
    """Write an (snr_db, value) analytic overlay table."""
    try:
        if format == "csv":
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["snr_db", value_column])
                for snr_db, value in rows:
                    writer.writerow([_format_float(snr_db), _format_float(value)])
        elif format == "json":
            payload = [
                {"snr_db": float(_format_float(s)), value_column: float(_format_float(v))}
                for s, v in rows
            ]
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
        else:
            raise ValueError(f"unknown output format {format!r}")
    except OSError as exc:
        raise OSError(f"failed to write table to {path}: {exc}") from exc

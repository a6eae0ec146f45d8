"""Command-line front end: BER sweeps, PEP runs, design checks, analytic tables."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import fields

from .config import ConfigError, SimConfig, default_config, pep_config
from .dstc import enumerate_codebook, get_design, validate_dispersion_set
from .harness import (
    analytic_ber_table,
    emit_results,
    emit_table,
    pep_bound_table,
    run_ber_sweep,
    run_pep_experiment,
)
from .modulation import PskConstellation

PAIR_DEFAULTS = {
    "system1": ("1,1", "-1,-1"),
    "system2": ("1,1,1,1", "-1,-1,1,1"),
}


def _parse_snr_list(values) -> tuple[float, ...]:
    grid = []
    for chunk in values:
        for token in str(chunk).replace(",", " ").split():
            grid.append(float(token))
    if not grid:
        raise ConfigError("empty SNR grid")
    return tuple(grid)


def _parse_symbols(text: str):
    return tuple(complex(tok) for tok in text.replace(",", " ").split())


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with SimConfig fields")
    parser.add_argument("--scheme", help="jbd | jbd_dstc | genie | coherent")
    parser.add_argument("--snr-db", nargs="+", help="SNR grid in dB (comma or space separated)")
    parser.add_argument("--seed", type=int, help="64-bit base seed")
    parser.add_argument("--workers", type=int, help="frame-level workers (SIM_WORKERS fallback)")
    parser.add_argument("--out", help="output path (stdout when omitted)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--noiseless", action="store_true", help="force zero noise (smoke mode)")


def _build_config(args, factory=default_config) -> SimConfig:
    cfg = SimConfig.from_json(args.config) if args.config else factory()
    overrides = {}
    if args.scheme:
        overrides["scheme"] = args.scheme
    if args.snr_db:
        overrides["snr_grid_db"] = _parse_snr_list(args.snr_db)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        cfg = cfg.replace(**overrides)
    return cfg.validate()


def _write_ber_stdout(records) -> None:
    writer = csv.writer(sys.stdout)
    names = [f.name for f in fields(type(records[0]))] if records else []
    if names:
        writer.writerow(names)
    for rec in records:
        writer.writerow([getattr(rec, name) for name in names])


def _cmd_ber(args) -> int:
    cfg = _build_config(args)
    records = run_ber_sweep(cfg, workers=args.workers, noiseless=args.noiseless)
    if args.out:
        emit_results(records, args.out, format=args.format, kind="ber")
        print(f"wrote {len(records)} records to {args.out}")
    else:
        _write_ber_stdout(records)
    return 0


def _cmd_pep(args) -> int:
    design = args.design
    if args.config:
        cfg = _build_config(args)
        design = design or cfg.resolved_design()
    else:
        design = design or "system1"
        cfg = _build_config(args, factory=lambda: pep_config(design))
    pair_a, pair_b = PAIR_DEFAULTS.get(design, (None, None))
    pair_a = args.pair_a or pair_a
    pair_b = args.pair_b or pair_b
    if pair_a is None or pair_b is None:
        raise ConfigError(f"--pair-a/--pair-b are required for design {design!r}")
    records = run_pep_experiment(
        cfg,
        _parse_symbols(pair_a),
        _parse_symbols(pair_b),
        workers=args.workers,
        noiseless=args.noiseless,
    )
    if args.out:
        emit_results(records, args.out, format=args.format, kind="pep")
        print(f"wrote {len(records)} records to {args.out}")
    else:
        _write_ber_stdout(records)
    return 0


def _cmd_validate(args) -> int:
    failed = False
    if args.config:
        try:
            SimConfig.from_json(args.config).validate()
            print(f"config {args.config}: ok")
        except ConfigError as exc:
            print(f"config {args.config}: INVALID ({exc})")
            failed = True
    names = args.design or ["system1", "system2", "alamouti_complex"]
    for name in names:
        design = get_design(name)
        order = 2 if design.real_only else 4
        codebook = enumerate_codebook(design, PskConstellation.from_order(order))
        report = validate_dispersion_set(design.dispersion, codebook.matrices)
        if report.ok:
            print(f"design {name}: ok ({len(codebook)} codewords checked)")
        else:
            failed = True
            print(f"design {name}: FAILED")
            for line in report.failures():
                print(f"  {line}")
    return 2 if failed else 0


def _cmd_analytic(args) -> int:
    cfg = _build_config(args, factory=default_config)
    if cfg.scheme == "jbd_dstc":
        design = cfg.resolved_design()
        pair_a, pair_b = PAIR_DEFAULTS.get(design, (None, None))
        pair_a = args.pair_a or pair_a
        pair_b = args.pair_b or pair_b
        if pair_a is None or pair_b is None:
            raise ConfigError(f"--pair-a/--pair-b are required for design {design!r}")
        rows = pep_bound_table(cfg, _parse_symbols(pair_a), _parse_symbols(pair_b))
        column = "bound"
    else:
        rows = analytic_ber_table(cfg)
        column = "ber"
    if args.out:
        emit_table(rows, args.out, format=args.format, value_column=column)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(["snr_db", column])
        for snr_db, value in rows:
            writer.writerow([snr_db, value])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twrsim",
        description="Link-level simulator for differential two-way relay OFDM schemes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ber = sub.add_parser("ber", help="Monte Carlo BER sweep over the SNR grid")
    _add_common_options(p_ber)
    p_ber.set_defaults(func=_cmd_ber)

    p_pep = sub.add_parser("pep", help="pairwise codeword error measurement")
    _add_common_options(p_pep)
    p_pep.add_argument("--design", choices=("system1", "system2"), help="dispersion design")
    p_pep.add_argument("--pair-a", help="first codeword symbols, e.g. '1,1'")
    p_pep.add_argument("--pair-b", help="second codeword symbols, e.g. '-1,-1'")
    p_pep.set_defaults(func=_cmd_pep)

    p_val = sub.add_parser("validate", help="check dispersion-set design rules")
    p_val.add_argument("--config", help="also validate this JSON config")
    p_val.add_argument(
        "--design",
        action="append",
        choices=("system1", "system2", "alamouti_complex"),
        help="design(s) to check (default: all)",
    )
    p_val.set_defaults(func=_cmd_validate)

    p_an = sub.add_parser("analytic", help="closed-form BER / PEP-bound tables")
    _add_common_options(p_an)
    p_an.add_argument("--pair-a", help="first codeword symbols (jbd_dstc)")
    p_an.add_argument("--pair-b", help="second codeword symbols (jbd_dstc)")
    p_an.set_defaults(func=_cmd_analytic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

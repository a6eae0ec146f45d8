"""Tests for SNR bookkeeping, sweeps, persistence, and the CLI."""

import json
import os

import numpy as np
import pytest

from twrsim.cli import main as cli_main
from twrsim.config import ConfigError, SimConfig, default_config, pep_config
from twrsim.harness import (
    BerRecord,
    PepRecord,
    analytic_ber_table,
    emit_results,
    pep_bound_table,
    read_results,
    resolve_workers,
    run_ber_sweep,
    run_pep_experiment,
    sigma2_for_snr,
    snr_at_user,
)


def tiny_config(**overrides):
    params = dict(
        n_blocks=10,
        snr_grid_db=(16.0,),
        min_errors=20,
        max_frames=8,
    )
    params.update(overrides)
    return default_config(**params)


class TestSnrBookkeeping:
    def test_unit_gain_two_relay_value(self):
        cfg = default_config()
        # forwarded gain 2, so SNR = 2 / (3 sigma2) for unit powers
        assert snr_at_user(cfg, 0.01, "B") == pytest.approx(2.0 / 0.03)

    def test_inverse_round_trip(self):
        cfg = default_config()
        for snr_db in (5.0, 17.0, 33.0):
            sigma2 = sigma2_for_snr(cfg, snr_db)
            back = 10.0 * np.log10(snr_at_user(cfg, sigma2, "B"))
            assert back == pytest.approx(snr_db, abs=1e-10)

    def test_normalized_gain_inverse_round_trip(self):
        cfg = pep_config("system1")
        for snr_db in (10.0, 25.0):
            sigma2 = sigma2_for_snr(cfg, snr_db)
            back = 10.0 * np.log10(snr_at_user(cfg, sigma2, "B"))
            assert back == pytest.approx(snr_db, abs=1e-6)

    def test_doubling_partner_power_adds_3db(self):
        base = default_config()
        boosted = default_config(power_a=2.0)
        s2 = 0.01
        gain_db = 10 * np.log10(snr_at_user(boosted, s2, "B") / snr_at_user(base, s2, "B"))
        assert gain_db == pytest.approx(3.0103, abs=1e-3)

    def test_per_hop_axis(self):
        cfg = default_config(gain_mode="per_subcarrier", snr_axis="per_hop", psk_order=2)
        assert sigma2_for_snr(cfg, 20.0) == pytest.approx(0.01)

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValueError):
            snr_at_user(default_config(), 0.0, "B")


class TestConfigValidation:
    def test_cp_rule_violation_surfaces_before_simulation(self):
        cfg = tiny_config(cp_uplink=10)  # needs taps + max delay = 17
        with pytest.raises(ConfigError):
            run_ber_sweep(cfg)

    def test_divisibility_violation(self):
        cfg = default_config(scheme="jbd_dstc", n_blocks=11)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_jbd_requires_reciprocity(self):
        with pytest.raises(ConfigError):
            default_config(scheme="jbd", reciprocal=False).validate()

    def test_reciprocal_requires_matching_delays(self):
        cfg = default_config(downlink_delays_b=(12, 9))
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_design_constellation_mismatch(self):
        with pytest.raises(ConfigError):
            default_config(scheme="jbd_dstc", dstc_design="system1").validate()

    def test_unknown_field_in_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"bogus": 1}))
        with pytest.raises(ConfigError):
            SimConfig.from_json(path)

    def test_json_round_trip(self, tmp_path):
        cfg = default_config(seed=77, snr_grid_db=(10.0, 20.0))
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert SimConfig.from_json(path) == cfg


class TestBerSweep:
    def test_noiseless_gives_zero_errors_both_schemes(self):
        for scheme, blocks in (("jbd", 200), ("jbd_dstc", 200)):
            cfg = default_config(
                scheme=scheme,
                n_blocks=blocks,
                snr_grid_db=(20.0,),
                min_errors=1,
                max_frames=3,
            )
            records = run_ber_sweep(cfg, noiseless=True)
            assert all(r.ber == 0.0 for r in records)
            assert all(r.errors == 0 for r in records)

    def test_deterministic_across_worker_counts(self):
        cfg = tiny_config(max_frames=64, min_errors=50)
        serial = run_ber_sweep(cfg, workers=1)
        parallel = run_ber_sweep(cfg, workers=4)
        assert serial == parallel

    def test_stopping_rule_soundness(self):
        cfg = tiny_config(min_errors=10, max_frames=64, snr_grid_db=(14.0, 30.0))
        for rec in run_ber_sweep(cfg):
            assert rec.errors >= cfg.min_errors or rec.frames == cfg.max_frames

    def test_both_users_reported(self):
        records = run_ber_sweep(tiny_config())
        assert sorted({r.user for r in records}) == ["A", "B"]
        assert all(r.ber == r.errors / r.bits for r in records)

    def test_genie_and_coherent_schemes_run(self):
        for scheme in ("genie", "coherent"):
            records = run_ber_sweep(tiny_config(scheme=scheme))
            assert records[0].scheme == scheme

    def test_min_frames_enforced(self):
        cfg = tiny_config(min_errors=1, min_frames=40, max_frames=64, snr_grid_db=(8.0,))
        records = run_ber_sweep(cfg)
        assert all(r.frames >= 40 for r in records)


class TestPepExperiment:
    def test_noiseless_pep_is_zero(self):
        cfg = pep_config(
            "system1", n_blocks=400, snr_grid_db=(25.0,), min_errors=1, max_frames=3
        )
        records = run_pep_experiment(cfg, (1, 1), (-1, -1), noiseless=True)
        assert records[0].pep == 0.0

    def test_identical_codewords_rejected(self):
        cfg = pep_config("system1", n_blocks=16)
        with pytest.raises(ConfigError):
            run_pep_experiment(cfg, (1, 1), (1, 1))

    def test_requires_dstc_scheme(self):
        with pytest.raises(ConfigError):
            run_pep_experiment(tiny_config(), (1, 1), (-1, -1))

    def test_deterministic_across_worker_counts(self):
        cfg = pep_config(
            "system1", n_blocks=32, snr_grid_db=(14.0,), min_errors=30, max_frames=64
        )
        a = run_pep_experiment(cfg, (1, 1), (-1, -1), workers=1)
        b = run_pep_experiment(cfg, (1, 1), (-1, -1), workers=3)
        assert a == b

    def test_bound_column_present(self):
        cfg = pep_config(
            "system1", n_blocks=16, snr_grid_db=(22.0,), min_errors=5, max_frames=16
        )
        rec = run_pep_experiment(cfg, (1, 1), (-1, -1))[0]
        assert rec.bound > 0
        assert rec.trials > 0


class TestPersistence:
    BER_RECORDS = [
        BerRecord("jbd", "A", 10.0, 128000, 321, 321 / 128000, 10),
        BerRecord("jbd", "B", 10.0, 128000, 298, 298 / 128000, 10),
    ]
    PEP_RECORDS = [PepRecord("jbd_dstc", 20.0, 633600, 412, 412 / 633600, 1.85e-3)]

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_ber_round_trip(self, tmp_path, fmt):
        path = tmp_path / f"out.{fmt}"
        emit_results(self.BER_RECORDS, path, format=fmt)
        parsed = read_results(path, format=fmt, kind="ber")
        for orig, back in zip(self.BER_RECORDS, parsed):
            assert back.scheme == orig.scheme and back.user == orig.user
            assert back.bits == orig.bits and back.errors == orig.errors
            assert back.ber == pytest.approx(orig.ber, rel=1e-9)

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_pep_round_trip(self, tmp_path, fmt):
        path = tmp_path / f"pep.{fmt}"
        emit_results(self.PEP_RECORDS, path, format=fmt)
        parsed = read_results(path, format=fmt, kind="pep")
        assert parsed[0].trials == self.PEP_RECORDS[0].trials
        assert parsed[0].bound == pytest.approx(1.85e-3)

    def test_empty_records_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_results([], path, format="csv", kind="ber")
        lines = path.read_text().strip().splitlines()
        assert lines == ["scheme,user,snr_db,bits,errors,ber,frames"]

    def test_csv_column_order(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_results(self.PEP_RECORDS, path, format="csv")
        header = path.read_text().splitlines()[0]
        assert header == "scheme,snr_db,trials,pairwise_errors,pep,bound"

    def test_analytic_overlay_matches_grid(self):
        cfg = default_config(
            gain_mode="per_subcarrier",
            psk_order=2,
            snr_axis="per_hop",
            snr_grid_db=(15.0, 20.0, 25.0),
        )
        rows = analytic_ber_table(cfg)
        assert [r[0] for r in rows] == [15.0, 20.0, 25.0]
        assert all(v > 0 for _, v in rows)

    def test_pep_bound_table(self):
        cfg = pep_config("system1", snr_grid_db=(20.0, 25.0))
        rows = pep_bound_table(cfg, (1, 1), (-1, -1))
        assert len(rows) == 2
        assert rows[0][1] > rows[1][1] > 0


class TestWorkers:
    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("SIM_WORKERS", "3")
        assert resolve_workers(None) == 3
        monkeypatch.delenv("SIM_WORKERS")
        assert resolve_workers(None) == 1

    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv("SIM_WORKERS", "3")
        assert resolve_workers(2) == 2

    def test_invalid(self):
        with pytest.raises(ConfigError):
            resolve_workers(0)


class TestCli:
    def test_ber_subcommand_writes_csv(self, tmp_path):
        out = tmp_path / "ber.csv"
        cfg = tiny_config().to_dict()
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        code = cli_main(
            ["ber", "--config", str(cfg_path), "--out", str(out), "--noiseless"]
        )
        assert code == 0
        assert out.read_text().splitlines()[0] == "scheme,user,snr_db,bits,errors,ber,frames"

    def test_ber_grid_override(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(tiny_config().to_dict()))
        code = cli_main(
            ["ber", "--config", str(cfg_path), "--snr-db", "12,18", "--noiseless"]
        )
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 1 + 4  # header + 2 points x 2 users

    def test_invalid_config_exits_2(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"scheme": "nonsense"}))
        assert cli_main(["ber", "--config", str(cfg_path)]) == 2

    def test_validate_subcommand(self, capsys):
        assert cli_main(["validate"]) == 0
        out = capsys.readouterr().out
        assert "system1: ok" in out and "system2: ok" in out

    def test_validate_bad_config_exits_2(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"n_subcarriers": 1}))
        assert cli_main(["validate", "--config", str(cfg_path)]) == 2

    def test_pep_subcommand(self, tmp_path):
        out = tmp_path / "pep.json"
        cfg = pep_config(
            "system1", n_blocks=400, min_errors=1, max_frames=2, snr_grid_db=(25.0,)
        )
        cfg_path = tmp_path / "pep_cfg.json"
        cfg_path.write_text(json.dumps(cfg.to_dict()))
        code = cli_main(
            [
                "pep",
                "--config",
                str(cfg_path),
                "--design",
                "system1",
                "--noiseless",
                "--out",
                str(out),
                "--format",
                "json",
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload[0]["pep"] == 0.0

    def test_analytic_subcommand(self, tmp_path):
        out = tmp_path / "table.csv"
        cfg = default_config(
            gain_mode="per_subcarrier", psk_order=2, snr_axis="per_hop"
        ).to_dict()
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        code = cli_main(
            ["analytic", "--config", str(cfg_path), "--snr-db", "15,20", "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "snr_db,ber"
        assert len(lines) == 3

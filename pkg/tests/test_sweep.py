"""Sweep config loading, execution, flushing, and report emission."""

import json
import math
from dataclasses import asdict

import numpy as np
import pytest

import jsqsim.sweep as sweep_mod
from jsqsim.model import Policy, SimConfig
from jsqsim.sweep import (
    CSV_COLUMNS,
    CellResult,
    ConfigError,
    SweepConfig,
    emit_report,
    load_config,
    resolve_workers,
    run_sweep,
)

SEED = 123456789


def write_config(tmp_path, text):
    path = tmp_path / "sweep.toml"
    path.write_text(text, encoding="utf-8")
    return path


TINY = SweepConfig(
    n_list=(2,), alpha_list=(1.5,), replications=2, seed=SEED,
    horizon=6000, warmup=500, retain_cap=2000,
)


class TestLoadConfig:
    def test_minimal_config_gets_defaults(self, tmp_path):
        cfg = load_config(write_config(tmp_path, "n_list = [4]\nalpha_list = [2.5]\n"))
        assert cfg.n_list == (4,)
        assert cfg.alpha_list == (2.5,)
        assert cfg.replications == 8
        assert cfg.policies == (Policy.jsq(),)
        assert cfg.formats == ("csv", "json")
        assert cfg.seed == SEED

    def test_unknown_key_suggests_nearest(self, tmp_path):
        path = write_config(tmp_path, "n_list = [4]\nalpha_list = [2.5]\nnbatches = 5\n")
        with pytest.raises(ConfigError, match="n_batches"):
            load_config(path)

    def test_missing_required_key(self, tmp_path):
        with pytest.raises(ConfigError, match="alpha_list"):
            load_config(write_config(tmp_path, "n_list = [4]\n"))

    def test_parse_error_carries_location(self, tmp_path):
        path = write_config(tmp_path, "n_list = [4\nalpha_list = [2.5]\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(path)

    def test_low_alpha_accepted_with_warning(self, tmp_path, caplog):
        path = write_config(tmp_path, "n_list = [4]\nalpha_list = [0.5]\n")
        with caplog.at_level("WARNING", logger="jsqsim"):
            cfg = load_config(path)
        assert cfg.alpha_list == (0.5,)
        assert any("alpha" in rec.message for rec in caplog.records)

    def test_infeasible_cell_rejected_up_front(self, tmp_path):
        path = write_config(
            tmp_path, "n_list = [1]\nalpha_list = [4.0]\nsigma_a_sq = 9.0\n"
        )
        with pytest.raises(ConfigError, match="N=1"):
            load_config(path)

    def test_policies_parsed(self, tmp_path):
        path = write_config(
            tmp_path,
            'n_list = [4]\nalpha_list = [2.5]\npolicies = ["jsq", "jsq(2)", "random"]\n',
        )
        assert load_config(path).policies == (
            Policy.jsq(), Policy.jsq_d(2), Policy.random(),
        )

    def test_type_errors_name_the_key(self, tmp_path):
        path = write_config(
            tmp_path, 'n_list = [4]\nalpha_list = [2.5]\nseed = "abc"\n'
        )
        with pytest.raises(ConfigError, match="seed"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(tmp_path / "nope.toml")


class TestRunSweep:
    def test_rows_and_files(self, tmp_path):
        out = tmp_path / "out"
        cells = run_sweep(TINY, out_dir=out)
        assert len(cells) == 1
        row = cells[0].row
        assert row.status == "ok"
        assert abs(row.u_rate_est - row.drift_target) <= 4 * row.u_rate_se
        assert (out / "results.csv").exists()
        assert (out / "results.json").exists()
        assert (out / "qq_2_1.5.csv").exists()
        assert (out / "mgf_2_1.5.csv").exists()

    def test_identical_runs_are_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_sweep(TINY, out_dir=out1)
        run_sweep(TINY, out_dir=out2)
        assert (out1 / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()

    def test_four_cell_drift_identity(self, tmp_path):
        cfg = SweepConfig(
            n_list=(2, 4), alpha_list=(1.5, 2.0), replications=3, seed=SEED,
            retain_cap=5000,
        )
        cells = run_sweep(cfg, out_dir=tmp_path / "out")
        assert len(cells) == 4
        for c in cells:
            r = c.row
            assert r.status == "ok"
            assert abs(r.u_rate_est - r.drift_target) <= 3 * r.u_rate_se

    def test_cell_failure_is_recorded_and_sweep_continues(self, tmp_path, monkeypatch):
        cfg = SweepConfig(n_list=(2, 3), alpha_list=(1.5,), replications=1,
                          seed=SEED, horizon=3000, warmup=200)
        real = sweep_mod.run_cell

        def flaky(cell_cfg, spec, workers):
            if cell_cfg.n_servers == 3:
                raise RuntimeError("synthetic failure")
            return real(cell_cfg, spec, workers)

        monkeypatch.setattr(sweep_mod, "run_cell", flaky)
        cells = run_sweep(cfg, out_dir=tmp_path / "out")
        statuses = [c.row.status for c in cells]
        assert statuses[0] == "ok"
        assert statuses[1].startswith("error:")
        assert math.isnan(cells[1].row.u_rate_est)

    def test_interruption_keeps_completed_cells(self, tmp_path, monkeypatch):
        cfg = SweepConfig(n_list=(2, 3, 4, 5), alpha_list=(1.5,), replications=1,
                          seed=SEED, horizon=3000, warmup=200)
        real = sweep_mod.run_cell
        calls = []

        def interrupting(cell_cfg, spec, workers):
            if len(calls) == 2:
                raise KeyboardInterrupt
            calls.append(cell_cfg.n_servers)
            return real(cell_cfg, spec, workers)

        monkeypatch.setattr(sweep_mod, "run_cell", interrupting)
        out = tmp_path / "out"
        with pytest.raises(KeyboardInterrupt):
            run_sweep(cfg, out_dir=out)
        lines = (out / "results.csv").read_text().splitlines()
        assert len(lines) == 1 + 2  # header + the two completed cells

    def test_unwritable_output_dir_fails_before_running(self, tmp_path, monkeypatch):
        blocker = tmp_path / "file"
        blocker.write_text("")
        called = []
        monkeypatch.setattr(sweep_mod, "run_cell",
                            lambda *a: called.append(1))
        with pytest.raises(OSError):
            run_sweep(TINY, out_dir=blocker / "sub")
        assert not called

    def test_workers_do_not_change_results(self, tmp_path):
        cfg = SweepConfig(n_list=(2,), alpha_list=(1.5,), replications=3,
                          seed=SEED, horizon=4000, warmup=300)
        run_sweep(cfg, out_dir=tmp_path / "w1")
        import dataclasses
        run_sweep(dataclasses.replace(cfg, workers=2), out_dir=tmp_path / "w2")
        assert ((tmp_path / "w1" / "results.csv").read_bytes()
                == (tmp_path / "w2" / "results.csv").read_bytes())


class TestEmitReport:
    def test_single_row_csv(self, tmp_path):
        cells = run_sweep(TINY, out_dir=tmp_path / "run")
        paths = emit_report(cells, ("csv",), tmp_path / "emit")
        csv_path = [p for p in paths if p.name == "results.csv"][0]
        lines = csv_path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 2

    def test_runtime_only_in_json(self, tmp_path):
        cells = run_sweep(TINY, out_dir=tmp_path / "run")
        emit_report(cells, ("csv", "json"), tmp_path / "emit")
        header = (tmp_path / "emit" / "results.csv").read_text().splitlines()[0]
        assert "runtime_seconds" not in header
        payload = json.loads((tmp_path / "emit" / "results.json").read_text())
        assert "runtime_seconds" in payload[0]

    def test_json_round_trip_reproduces_rows(self, tmp_path):
        cells = run_sweep(TINY, out_dir=tmp_path / "run")
        emit_report(cells, ("json",), tmp_path / "emit")
        payload = json.loads((tmp_path / "emit" / "results.json").read_text())
        assert payload == [asdict(c.row) for c in cells]

    def test_qq_rows_equal_retained_samples(self, tmp_path):
        cells = run_sweep(TINY, out_dir=tmp_path / "run")
        emit_report(cells, (), tmp_path / "emit")
        qq_lines = (tmp_path / "emit" / "qq_2_1.5.csv").read_text().splitlines()
        assert len(qq_lines) - 1 == cells[0].summary.scaled_samples.size

    def test_mgf_file_has_grid_and_targets(self, tmp_path):
        cells = run_sweep(TINY, out_dir=tmp_path / "run")
        emit_report(cells, (), tmp_path / "emit")
        lines = (tmp_path / "emit" / "mgf_2_1.5.csv").read_text().splitlines()
        assert lines[0] == "theta,est,se,target"
        assert len(lines) - 1 == 21
        theta, est, se, target = lines[1].split(",")
        assert float(target) == pytest.approx(1.0 / (1.0 - float(theta)))

    def test_policy_suffix_only_when_ambiguous(self, tmp_path):
        cfg = SweepConfig(n_list=(2,), alpha_list=(1.5,), replications=1,
                          policies=(Policy.jsq(), Policy.random()),
                          seed=SEED, horizon=3000, warmup=200)
        out = tmp_path / "out"
        run_sweep(cfg, out_dir=out)
        assert (out / "qq_2_1.5_jsq.csv").exists()
        assert (out / "qq_2_1.5_random.csv").exists()

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report([], ("csv",), tmp_path)


class TestWorkers:
    def test_explicit_config_wins(self, monkeypatch):
        monkeypatch.setenv(sweep_mod.WORKERS_ENV_VAR, "7")
        assert resolve_workers(3, 8) == 3

    def test_env_var_honored(self, monkeypatch):
        monkeypatch.setenv(sweep_mod.WORKERS_ENV_VAR, "5")
        assert resolve_workers(0, 8) == 5

    def test_bad_env_var_rejected(self, monkeypatch):
        monkeypatch.setenv(sweep_mod.WORKERS_ENV_VAR, "many")
        with pytest.raises(ConfigError):
            resolve_workers(0, 8)

    def test_auto_caps_at_replications(self, monkeypatch):
        monkeypatch.delenv(sweep_mod.WORKERS_ENV_VAR, raising=False)
        assert resolve_workers(0, 2) <= 2

"""Tests for the CLI: artifacts, determinism, aggregation, exit codes."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from gmphd_sat.cli import (
    EVENTS_HEADER,
    METRICS_HEADER,
    TRACKS_HEADER,
    RunManifest,
    main,
    run,
)
from gmphd_sat.config import config_from_dict


def small_cfg(**over):
    data = {"steps": 100, "clutter_rate": 0.1, **over}
    return config_from_dict(data)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestRun:
    def test_artifacts_exist_with_headers(self, tmp_path):
        manifest = RunManifest(
            scenario="t", config=small_cfg(), seeds=(0,), out_dir=tmp_path / "out"
        )
        assert run(manifest, parallel=False) == 0
        seed_dir = tmp_path / "out" / "seed_0"
        metrics = read_csv(seed_dir / "metrics.csv")
        assert metrics[0] == METRICS_HEADER
        assert len(metrics) == 101
        tracks = read_csv(seed_dir / "tracks.csv")
        assert tracks[0] == TRACKS_HEADER
        events = read_csv(seed_dir / "events.csv")
        assert events[0] == EVENTS_HEADER
        assert (tmp_path / "out" / "summary.json").exists()
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_csv_roundtrip_lossless(self, tmp_path):
        manifest = RunManifest(
            scenario="t", config=small_cfg(), seeds=(1,), out_dir=tmp_path / "out"
        )
        run(manifest, parallel=False)
        rows = read_csv(tmp_path / "out" / "seed_1" / "metrics.csv")[1:]
        for row in rows:
            for cell in row[3:5]:
                value = float(cell)
                assert format(value, ".17g") == cell  # parse-back identity

    def test_rerun_byte_identical(self, tmp_path):
        for sub in ("a", "b"):
            manifest = RunManifest(
                scenario="t", config=small_cfg(), seeds=(3,), out_dir=tmp_path / sub
            )
            run(manifest, parallel=False)
        for name in ("metrics.csv", "tracks.csv", "events.csv"):
            a = (tmp_path / "a" / "seed_3" / name).read_bytes()
            b = (tmp_path / "b" / "seed_3" / name).read_bytes()
            assert a == b

    def test_multi_seed_summary(self, tmp_path):
        manifest = RunManifest(
            scenario="t", config=small_cfg(), seeds=tuple(range(3)), out_dir=tmp_path / "out"
        )
        assert run(manifest, parallel=False) == 0
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["n_seeds"] == 3
        stats = summary["metrics"]["n_confirmed"]["full_run"]
        assert stats["mean"] is not None
        assert stats["std"] is not None
        assert len(stats["per_seed"]) == 3

    def test_empty_seed_list_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            RunManifest(scenario="t", config=small_cfg(), seeds=(), out_dir=tmp_path)


class TestMain:
    def test_run_subcommand(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GMPHD_SAT_OUT", str(tmp_path))
        status = main(["run", "--steps", "60", "--seed", "2", "--clutter", "0.1"])
        assert status == 0
        assert (tmp_path / "default" / "seed_2" / "metrics.csv").exists()

    def test_batch_and_table(self, tmp_path):
        out = tmp_path / "batch"
        status = main(
            ["batch", "--steps", "60", "--seeds", "2", "--out", str(out), "--serial", "--no-logs"]
        )
        assert status == 0
        table_out = tmp_path / "table.json"
        status = main(["table", "--in", str(out), "--out", str(table_out)])
        assert status == 0
        table = json.loads(table_out.read_text())
        assert "0" in table["by_clutter_rate"]
        assert "number_of_tracks" in table["by_clutter_rate"]["0"]

    def test_compare_push(self, tmp_path):
        out = tmp_path / "cmp"
        status = main(
            [
                "compare", "--what", "push", "--steps", "60", "--seeds", "2",
                "--clutter", "0.1", "--out", str(out), "--serial", "--no-logs",
            ]
        )
        assert status == 0
        comparison = json.loads((out / "comparison.json").read_text())
        assert set(comparison["variants"]) == {"with_push", "without_push"}

    def test_config_file_and_overrides(self, tmp_path):
        cfg_path = tmp_path / "scenario.yaml"
        cfg_path.write_text("steps: 50\nclutter_rate: 0.0\n")
        out = tmp_path / "run"
        status = main(
            ["run", "--config", str(cfg_path), "--estimate", "over", "--no-push", "--out", str(out)]
        )
        assert status == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["initial_estimate"] == "over"
        assert manifest["config"]["push_enabled"] is False
        assert manifest["config"]["steps"] == 50

    def test_bad_config_exit_code(self, tmp_path):
        cfg_path = tmp_path / "bad.yaml"
        cfg_path.write_text("clutter_rate: -0.1\n")
        assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 2

    def test_moving_targets_flag(self, tmp_path):
        out = tmp_path / "mv"
        status = main(
            ["run", "--steps", "50", "--moving-targets", "--out", str(out), "--no-logs"]
        )
        assert status == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["targets"]["stationary"] is False


class TestFailureHandling:
    def test_partial_failure_nonzero_exit(self, tmp_path, monkeypatch):
        import gmphd_sat.cli as cli_mod

        calls = {"n": 0}
        real = cli_mod.run_scenario

        def flaky(cfg, keep_logs=True):
            calls["n"] += 1
            if cfg.seed == 1:
                raise RuntimeError("boom")
            return real(cfg, keep_logs=keep_logs)

        monkeypatch.setattr(cli_mod, "run_scenario", flaky)
        manifest = RunManifest(
            scenario="t", config=small_cfg(steps=40), seeds=(0, 1, 2), out_dir=tmp_path / "out"
        )
        status = run(manifest, parallel=False)
        assert status == 1
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert list(summary["failed_seeds"]) == ["1"]
        # Other seeds still completed.
        assert (tmp_path / "out" / "seed_0" / "metrics.csv").exists()
        assert (tmp_path / "out" / "seed_2" / "metrics.csv").exists()

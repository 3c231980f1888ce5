"""Tests for the command-line experiment harness.

Each experiment is run in-process through ``main`` with small replicate
counts; the tests check exit codes, artifact schemas, byte-level
reproducibility, worker-count independence and config/flag precedence.  One
test goes through a real subprocess to exercise the installed entry point.
"""

import json
import subprocess
import sys

import pytest

from slfvsim import cli
from slfvsim.cli import (
    EXIT_BUDGET,
    EXIT_DIAGNOSTIC,
    EXIT_OK,
    EXIT_VALIDATION,
    EXPERIMENTS,
    ResultTable,
    main,
)


def _run(out_dir, experiment, *flags):
    argv = [experiment, "--out", str(out_dir), *flags]
    return main(argv)


def _summary(out_dir, experiment):
    data = json.loads((out_dir / f"{experiment}-summary.json").read_text())
    return data["summary"], data["provenance"]


def _csv_lines(out_dir, experiment):
    return (out_dir / f"{experiment}.csv").read_text().splitlines()


class TestExitCodes:
    def test_invalid_upsilon_is_a_validation_error(self, tmp_path, capsys):
        code = _run(tmp_path, "samelaw", "--upsilon", "1.5", "--reps", "50")
        assert code == EXIT_VALIDATION
        assert "error:" in capsys.readouterr().err

    def test_meeting_time_without_drift_is_a_validation_error(self, tmp_path):
        code = _run(tmp_path, "meeting-time", "--alpha", "0.0",
                    "--reps", "50")
        assert code == EXIT_VALIDATION

    def test_sweep_value_outside_unit_interval_rejected(self, tmp_path):
        code = _run(tmp_path, "pu-curve", "--upsilons", "0.5,1.2")
        assert code == EXIT_VALIDATION

    def test_net_diagnostics_require_full_impact(self, tmp_path):
        code = _run(tmp_path, "net-diagnostics", "--upsilon", "0.5",
                    "--reps", "2")
        assert code == EXIT_VALIDATION

    def test_nearby_scaling_needs_two_sizes(self, tmp_path):
        code = _run(tmp_path, "nearby-scaling", "--ns", "100")
        assert code == EXIT_VALIDATION

    def test_missing_config_file_is_a_validation_error(self, tmp_path):
        code = _run(tmp_path, "samelaw", "--config",
                    str(tmp_path / "absent.cfg"))
        assert code == EXIT_VALIDATION

    def test_exhausted_budget_exits_with_budget_code(self, tmp_path, capsys):
        code = _run(tmp_path, "simulate", "--budget", "1", "--seed", "1",
                    "--horizon", "0.5")
        assert code == EXIT_BUDGET
        assert "budget" in capsys.readouterr().err

    def test_forced_diagnostic_still_writes_artifacts(self, tmp_path,
                                                      monkeypatch, capsys):
        # a runner that reports a structural fault must still produce its
        # CSV/JSON artifacts before the harness exits with code 4
        def fake_runner(spec):
            table = ResultTable(columns=("a",), rows=[(1,)],
                                summary={"note": "forced"})
            return table, {"extra.txt": "payload"}, "forced fault"

        monkeypatch.setitem(cli._RUNNERS, "metric-selftest", fake_runner)
        code = _run(tmp_path, "metric-selftest")
        assert code == EXIT_DIAGNOSTIC
        assert (tmp_path / "metric-selftest.csv").read_text() == "a\n1\n"
        assert (tmp_path / "extra.txt").read_text() == "payload"
        summary, _ = _summary(tmp_path, "metric-selftest")
        assert summary == {"note": "forced"}
        assert "forced fault" in capsys.readouterr().err


class TestArtifacts:
    def test_simulate_writes_table_summary_and_genealogy(self, tmp_path,
                                                         capsys):
        code = _run(tmp_path, "simulate", "--seed", "5", "--horizon", "0.1",
                    "--starts", "0.0,0.3")
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "simulate: wrote" in out
        lines = _csv_lines(tmp_path, "simulate")
        assert lines[0] == ("replicate,final_lineages,min_position,"
                            "max_position,interactions")
        assert len(lines) == 2
        summary, prov = _summary(tmp_path, "simulate")
        assert summary["start_points"] == [0.0, 0.3]
        assert summary["final_lineages"] >= 1
        graph = json.loads((tmp_path / "genealogy.json").read_text())
        for key in ("nodes", "edges", "events"):
            assert key in graph
        assert len(graph["nodes"]) >= 2

    def test_provenance_block_is_complete(self, tmp_path):
        code = _run(tmp_path, "simulate", "--seed", "5", "--horizon", "0.05",
                    "--alpha", "0.75")
        assert code == EXIT_OK
        _, prov = _summary(tmp_path, "simulate")
        assert prov["experiment"] == "simulate"
        assert prov["alpha"] == 0.75          # alpha is always echoed
        assert prov["n"] == 100
        assert prov["upsilon"] == 1.0
        assert prov["mu_atoms"] == [[1.0, 1.0]]
        assert prov["seed"] == 5
        assert prov["budget"] == 1_000_000
        for key in ("build_id", "wall_time_s", "timestamp", "workers",
                    "horizon", "replicates"):
            assert key in prov

    def test_metric_selftest_reports_zero_failures(self, tmp_path):
        code = _run(tmp_path, "metric-selftest", "--reps", "60",
                    "--seed", "3")
        assert code == EXIT_OK
        lines = _csv_lines(tmp_path, "metric-selftest")
        assert lines[0] == "check,trials,failures"
        body = [line.split(",") for line in lines[1:]]
        assert sorted(row[0] for row in body) == [
            "envelope", "identity", "nonnegativity", "symmetry", "triangle"]
        assert all(row[1] == "60" and row[2] == "0" for row in body)
        summary, _ = _summary(tmp_path, "metric-selftest")
        assert summary["worst_triangle_excess"] <= 1e-9

    def test_samelaw_artifacts(self, tmp_path):
        code = _run(tmp_path, "samelaw", "--reps", "300", "--seed", "2")
        assert code == EXIT_OK
        lines = _csv_lines(tmp_path, "samelaw")
        assert lines[0] == ("class,replicate,forward_delta,"
                            "negated_backward_delta")
        assert len(lines) == 1 + 4 * 300
        summary, _ = _summary(tmp_path, "samelaw")
        for label in ("neutral-left", "neutral-right", "selective-left",
                      "selective-right"):
            block = summary["classes"][label]
            assert block["p_value"] > 1e-4
            assert 0.0 <= block["ks_statistic"] <= 1.0

    def test_drift_diffusion_artifacts(self, tmp_path):
        code = _run(tmp_path, "drift-diffusion", "--reps", "600",
                    "--seed", "4")
        assert code == EXIT_OK
        lines = _csv_lines(tmp_path, "drift-diffusion")
        assert lines[0] == "replicate,drift_displacement,neutral_displacement"
        assert len(lines) == 601
        summary, _ = _summary(tmp_path, "drift-diffusion")
        for key in ("zeta_hat", "xi2_hat", "zeta_theory",
                    "xi2_reported_theory", "xi2_derived_theory",
                    "xi2_supported"):
            assert key in summary
        assert summary["xi2_supported"] in ("reported", "derived")

    def test_duality_artifacts(self, tmp_path):
        code = _run(tmp_path, "duality", "--reps", "200", "--seed", "6")
        assert code == EXIT_OK
        lines = _csv_lines(tmp_path, "duality")
        assert lines[0] == "replicate,forward_product"
        assert len(lines) == 201
        summary, _ = _summary(tmp_path, "duality")
        assert summary["replicates"] == 200
        assert abs(summary["z"]) < 6.0
        values = {line.split(",")[1] for line in lines[1:]}
        assert values <= {"0.0", "1.0"}       # indicator start profile

    def test_meeting_time_artifacts(self, tmp_path):
        code = _run(tmp_path, "meeting-time", "--reps", "150", "--seed", "8")
        assert code == EXIT_OK
        lines = _csv_lines(tmp_path, "meeting-time")
        assert lines[0] == "replicate,meeting_time,met"
        assert len(lines) == 151
        summary, _ = _summary(tmp_path, "meeting-time")
        assert summary["oracle_mean"] == pytest.approx(0.75)
        assert summary["approach_drift"] == pytest.approx(4.0 / 3.0)
        assert summary["gap_variance"] == pytest.approx(8.0 / 3.0)
        assert summary["met_fraction"] > 0.95
        assert summary["p_value"] > 1e-4

    def test_pu_curve_artifacts(self, tmp_path):
        code = _run(tmp_path, "pu-curve", "--upsilons", "0.5,1.0",
                    "--reps", "25", "--seed", "9", "--horizon", "0.5")
        assert code == EXIT_OK
        lines = _csv_lines(tmp_path, "pu-curve")
        assert lines[0] == "upsilon,mean,se,replicates"
        assert len(lines) == 3
        assert [line.split(",")[0] for line in lines[1:]] == ["0.5", "1.0"]
        summary, _ = _summary(tmp_path, "pu-curve")
        assert summary["full_impact_drift_theory"] == pytest.approx(2.0 / 3.0)
        assert summary["partial"] is False
        assert len(summary["per_upsilon"]) == 2
        for block in summary["per_upsilon"]:
            assert block["completed"] == 25
            assert block["budget_exceeded"] == 0

    def test_nearby_scaling_artifacts(self, tmp_path):
        code = _run(tmp_path, "nearby-scaling", "--ns", "100,400",
                    "--reps", "200", "--seed", "10", "--horizon", "0.5")
        assert code == EXIT_OK
        lines = _csv_lines(tmp_path, "nearby-scaling")
        assert lines[0] == "n,replicate,nearby_time"
        assert len(lines) == 1 + 2 * 200
        summary, _ = _summary(tmp_path, "nearby-scaling")
        assert summary["expected_slope"] == -0.5
        assert -1.0 < summary["loglog_slope"] < 0.0
        assert {b["n"] for b in summary["per_n"]} == {100, 400}

    def test_net_diagnostics_pass_cleanly(self, tmp_path):
        code = _run(tmp_path, "net-diagnostics", "--reps", "4",
                    "--seed", "11")
        assert code == EXIT_OK
        lines = _csv_lines(tmp_path, "net-diagnostics")
        assert lines[0] == "trial,crossings,wedge_violations,events"
        assert len(lines) == 5
        assert all(line.split(",")[1] == "0" and line.split(",")[2] == "0"
                   for line in lines[1:])
        summary, _ = _summary(tmp_path, "net-diagnostics")
        assert summary["total_crossings"] == 0
        assert summary["total_wedge_violations"] == 0
        assert summary["meeting_time"]["p_value"] > 0.01


class TestDeterminism:
    def test_csv_bytes_reproducible_across_runs(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert _run(out, "samelaw", "--reps", "120", "--seed", "7") \
                == EXIT_OK
        assert (a / "samelaw.csv").read_bytes() == \
            (b / "samelaw.csv").read_bytes()
        sa, _ = _summary(a, "samelaw")
        sb, _ = _summary(b, "samelaw")
        assert sa == sb

    def test_worker_count_does_not_change_results(self, tmp_path):
        a = tmp_path / "w1"
        b = tmp_path / "w2"
        common = ("--upsilons", "0.4,0.8", "--reps", "20", "--seed", "13",
                  "--horizon", "0.5")
        assert _run(a, "pu-curve", *common, "--workers", "1") == EXIT_OK
        assert _run(b, "pu-curve", *common, "--workers", "2") == EXIT_OK
        assert (a / "pu-curve.csv").read_bytes() == \
            (b / "pu-curve.csv").read_bytes()

    def test_genealogy_reproducible(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            # note the '=' form: a leading '-' would otherwise read as a flag
            assert _run(out, "simulate", "--seed", "21", "--horizon", "0.1",
                        "--starts=-0.2,0.2") == EXIT_OK
        assert (a / "genealogy.json").read_bytes() == \
            (b / "genealogy.json").read_bytes()


class TestConfigPrecedence:
    def test_config_overrides_defaults_and_flags_override_config(
            self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("alpha = 0.5\nreps = 40\n# comment line\n")
        out1 = tmp_path / "o1"
        code = _run(out1, "samelaw", "--config", str(cfg), "--seed", "1")
        assert code == EXIT_OK
        _, prov = _summary(out1, "samelaw")
        assert prov["alpha"] == 0.5           # config beats the default 1.0
        assert prov["replicates"] == 40
        assert len(_csv_lines(out1, "samelaw")) == 1 + 4 * 40

        out2 = tmp_path / "o2"
        code = _run(out2, "samelaw", "--config", str(cfg), "--seed", "1",
                    "--alpha", "0.25", "--reps", "25")
        assert code == EXIT_OK
        _, prov = _summary(out2, "samelaw")
        assert prov["alpha"] == 0.25          # flag beats the config
        assert prov["replicates"] == 25

    def test_all_experiments_are_registered(self):
        assert set(cli._RUNNERS) == set(EXPERIMENTS)


class TestEntryPoint:
    def test_module_invocation_via_subprocess(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "slfvsim.cli", "simulate",
             "--seed", "3", "--horizon", "0.05", "--out", str(tmp_path)],
            capture_output=True, text=True, timeout=300,
        )
        assert proc.returncode == EXIT_OK, proc.stderr
        assert "simulate: wrote" in proc.stdout
        assert (tmp_path / "simulate.csv").exists()

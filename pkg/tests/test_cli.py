"""End-to-end command-line behavior: exit codes, artifacts, determinism."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import switchstab.cli as cli


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def uh_doc(out_dir, n_paths=200, nu_max=4, horizon=8.0):
    return {
        "system": {"kind": "linear", "A": [[[-1.0]], [[-3.0]]],
                   "B": [[[1.0]], [[1.0]]]},
        "lyapunov": {"P": [[[1.0]], [[1.0]]], "rates": [1.0, 3.0],
                     "chi": {"c": 1.0, "p": 2.0}},
        "switching": {"kind": "uh", "T": 1.0, "q": [0.5, 0.5]},
        "disturbance": {"kind": "sinusoid", "amplitude": 0.5, "omega": 2.0},
        "experiment": {"x0": [5.0], "horizon": horizon, "step": 0.02,
                       "n_paths": n_paths, "nu_max": nu_max, "seed": 2026},
        "outputs": {"dir": out_dir},
    }


def class_g_doc(out_dir):
    doc = uh_doc(out_dir, n_paths=150, nu_max=1, horizon=16.0)
    doc["switching"] = {"kind": "class-g", "lambda_tilde": 0.5, "lambda_bar": 0.5,
                        "sigma0": 0}
    doc["disturbance"] = {"kind": "sinusoid", "amplitude": 0.1, "omega": 0.5}
    doc["experiment"]["x0"] = [2.0]
    doc["experiment"]["rho"] = {"c": 0.5, "p": 1.0}
    doc["experiment"]["eta_ball"] = 1.6
    doc["experiment"]["grid_points"] = 9
    return doc


def ctmc_doc(out_dir):
    doc = uh_doc(out_dir, n_paths=150, nu_max=2, horizon=8.0)
    doc["system"] = {"kind": "linear", "A": [[[-1.0]], [[-2.0]]],
                     "B": [[[1.0]], [[1.0]]]}
    doc["lyapunov"] = {"P": [[[1.0]], [[2.0]]], "rates": [0.4, 0.4],
                       "chi": {"c": 1.0, "p": 2.0}}
    doc["switching"] = {"kind": "ctmc", "Q": [[-1.0, 1.0], [1.0, -1.0]], "sigma0": 0}
    doc["disturbance"] = {"kind": "constant", "value": [0.1]}
    doc["experiment"]["x0"] = [1.0]
    doc["experiment"]["rho"] = {"c": 4.0, "p": 1.0}
    doc["experiment"]["grid_points"] = 9
    return doc


def synth_doc(out_dir):
    doc = uh_doc(out_dir, n_paths=150, nu_max=3, horizon=6.0)
    doc["system"] = {"kind": "linear", "A": [[[1.0]], [[0.5]]],
                     "B": [[[1.0]], [[1.0]]], "G": [[[1.0]], [[1.0]]]}
    doc["controller"] = {"kind": "universal"}
    return doc


class TestCertify:
    def test_benchmark_passes(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, uh_doc(str(out)))
        assert cli.main(["certify", "--config", cfg]) == 0
        text = capsys.readouterr().out
        assert "PASS" in text and "eta" in text
        report = json.loads((out / "report.json").read_text())
        assert report["certificate"]["passed"] is True
        assert report["certificate"]["contraction"] == pytest.approx(
            0.4744291013529681, rel=1e-12)
        assert report["decrement"]["passed"] is True

    def test_boundary_margin_class_g_fails(self, tmp_path, capsys):
        # exact compatibility constant 6 meets (0.2 + 1) / 0.2 head on: margin 0
        out = tmp_path / "out"
        doc = uh_doc(str(out))
        doc["system"] = {"kind": "linear", "A": [[[-1.0]], [[-1.0]]],
                         "B": [[[1.0]], [[1.0]]]}
        doc["lyapunov"] = {"P": [[[1.0]], [[6.0]]], "rates": [1.0, 1.0],
                           "chi": {"c": 6.0, "p": 2.0}}
        doc["switching"] = {"kind": "class-g", "lambda_tilde": 0.2, "lambda_bar": 0.2}
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["certify", "--config", cfg]) == 1
        report = json.loads((out / "report.json").read_text())
        assert report["certificate"]["passed"] is False
        assert report["certificate"]["margin"] == pytest.approx(0.0, abs=1e-12)
        assert "FAIL" in capsys.readouterr().out

    def test_decrement_violation_reports_witness(self, tmp_path, capsys):
        out = tmp_path / "out"
        doc = uh_doc(str(out))
        doc["lyapunov"]["rates"] = [3.0, 3.0]   # mode 0 cannot decay that fast
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["certify", "--config", cfg]) == 1
        report = json.loads((out / "report.json").read_text())
        assert report["decrement"]["passed"] is False
        assert report["decrement"]["witness"]["mode"] == 0
        assert "violated" in capsys.readouterr().out

    def test_bad_config_exits_2(self, tmp_path, capsys):
        doc = uh_doc(str(tmp_path / "out"))
        del doc["experiment"]["seed"]
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["certify", "--config", cfg]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_file_exits_2(self, tmp_path, capsys):
        assert cli.main(["certify", "--config", str(tmp_path / "nope.json")]) == 2


class TestSimulate:
    def test_writes_trajectories(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, uh_doc(str(out), horizon=4.0))
        assert cli.main(["simulate", "--config", cfg, "--trajectories", "3"]) == 0
        for m in range(3):
            rows = list(csv.reader(open(out / f"trajectory_{m}.csv")))
            assert rows[0] == ["t", "mode", "x_1", "is_switch"]
            assert float(rows[1][0]) == 0.0
        report = json.loads((out / "report.json").read_text())
        assert len(report["trajectories"]) == 3

    def test_deterministic_reruns(self, tmp_path):
        doc_a = uh_doc(str(tmp_path / "a"), horizon=4.0)
        doc_b = uh_doc(str(tmp_path / "b"), horizon=4.0)
        cfg_a = write_cfg(tmp_path, doc_a, "a.json")
        cfg_b = write_cfg(tmp_path, doc_b, "b.json")
        assert cli.main(["simulate", "--config", cfg_a, "--trajectories", "2"]) == 0
        assert cli.main(["simulate", "--config", cfg_b, "--trajectories", "2"]) == 0
        for name in ("trajectory_0.csv", "trajectory_1.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_changes_output(self, tmp_path):
        doc = uh_doc(str(tmp_path / "a"), horizon=4.0)
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["simulate", "--config", cfg, "--trajectories", "1"]) == 0
        first = (tmp_path / "a" / "trajectory_0.csv").read_bytes()
        assert cli.main(["simulate", "--config", cfg, "--trajectories", "1",
                         "--seed", "9"]) == 0
        assert (tmp_path / "a" / "trajectory_0.csv").read_bytes() != first

    @pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning")
    @pytest.mark.filterwarnings("ignore:invalid value encountered:RuntimeWarning")
    def test_blow_up_exits_1(self, tmp_path, capsys):
        out = tmp_path / "out"
        doc = uh_doc(str(out), horizon=800.0)
        doc["system"]["A"] = [[[1.0]], [[1.0]]]     # pure growth, overflows
        doc["lyapunov"]["rates"] = [-3.0, -3.0]
        doc["experiment"]["step"] = 0.4
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["simulate", "--config", cfg, "--trajectories", "1"]) == 1
        assert "blew up" in capsys.readouterr().err


class TestVerifyIss:
    def test_uh_pipeline_passes(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, uh_doc(str(out)))
        assert cli.main(["verify-iss", "--config", cfg]) == 0
        rows = list(csv.reader(open(out / "verdict.csv")))
        assert rows[0] == ["nu", "mean_V", "se_V", "bound", "pass",
                           "mean_alpha1", "se_alpha1"]
        assert len(rows) == 5
        assert all(r[4] == "1" for r in rows[1:])
        report = json.loads((out / "report.json").read_text())
        assert report["verdict"]["passed"] is True
        assert "PASS" in capsys.readouterr().out

    def test_trajectories_flag_overrides_path_count(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, uh_doc(str(out)))
        assert cli.main(["verify-iss", "--config", cfg, "--trajectories", "50"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["verdict"]["rows"][0]["count"] == 50

    def test_output_dir_override(self, tmp_path):
        cfg = write_cfg(tmp_path, uh_doc(str(tmp_path / "ignored")))
        target = tmp_path / "elsewhere"
        assert cli.main(["verify-iss", "--config", cfg,
                         "--output-dir", str(target)]) == 0
        assert (target / "verdict.csv").exists()
        assert not (tmp_path / "ignored").exists()

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_cfg(tmp_path, uh_doc(str(tmp_path / "a")))
        assert cli.main(["verify-iss", "--config", cfg]) == 0
        cfg_b = write_cfg(tmp_path, uh_doc(str(tmp_path / "b")), "b.json")
        assert cli.main(["verify-iss", "--config", cfg_b]) == 0
        for name in ("report.json", "verdict.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b

    def test_class_g_envelopes_written(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, class_g_doc(str(out)))
        assert cli.main(["verify-iss", "--config", cfg]) == 0
        pre = list(csv.reader(open(out / "envelope_pre.csv")))
        post = list(csv.reader(open(out / "envelope_post.csv")))
        assert pre[0] == ["t", "estimate", "se", "envelope", "pass"]
        assert len(pre) == len(post) == 10
        report = json.loads((out / "report.json").read_text())
        assert report["envelopes"]["passed"] is True
        assert report["certificate"]["margin"] == pytest.approx(2.0)

    def test_ctmc_boundedness_written(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, ctmc_doc(str(out)))
        assert cli.main(["verify-iss", "--config", cfg]) == 0
        rows = list(csv.reader(open(out / "verdict.csv")))
        assert rows[0] == ["t", "estimate", "se", "bound", "pass"]
        report = json.loads((out / "report.json").read_text())
        assert report["boundedness"]["passed"] is True

    def test_ctmc_without_rho_exits_2(self, tmp_path, capsys):
        out = tmp_path / "out"
        doc = ctmc_doc(str(out))
        del doc["experiment"]["rho"]
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["verify-iss", "--config", cfg]) == 2
        assert "experiment.rho" in capsys.readouterr().err

    def test_failed_certificate_exits_1(self, tmp_path, capsys):
        out = tmp_path / "out"
        doc = uh_doc(str(out))
        # growing single-effective-mode mix: contraction above 1
        doc["lyapunov"]["rates"] = [-0.5, -0.5]
        doc["system"]["A"] = [[[0.2]], [[0.2]]]
        doc["lyapunov"]["chi"] = {"c": 10.0, "p": 2.0}
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["verify-iss", "--config", cfg]) == 1
        report = json.loads((out / "report.json").read_text())
        assert report["certificate"]["passed"] is False
        assert not (out / "verdict.csv").exists()


class TestSynthesize:
    def test_universal_controller_pipeline(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_cfg(tmp_path, synth_doc(str(out)))
        assert cli.main(["synthesize", "--config", cfg]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["closed_loop_check"]["passed"] is True
        assert report["controller"]["kind"] == "mode-dependent-universal"
        assert report["verdict"]["passed"] is True
        assert (out / "verdict.csv").exists()

    def test_without_G_exits_2(self, tmp_path, capsys):
        out = tmp_path / "out"
        doc = synth_doc(str(out))
        del doc["system"]["G"]
        del doc["controller"]
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["synthesize", "--config", cfg]) == 2
        assert "system.G" in capsys.readouterr().err

    def test_zero_gain_fails_with_witness(self, tmp_path, capsys):
        out = tmp_path / "out"
        doc = synth_doc(str(out))
        doc["controller"] = {"kind": "linear", "K": [[0.0]]}
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["synthesize", "--config", cfg]) == 1
        report = json.loads((out / "report.json").read_text())
        assert report["closed_loop_check"]["passed"] is False
        assert report["closed_loop_check"]["witness"] is not None
        assert "violated" in capsys.readouterr().out

    def test_stabilizing_linear_gain_passes(self, tmp_path):
        out = tmp_path / "out"
        doc = synth_doc(str(out))
        doc["controller"] = {"kind": "linear", "K": [[-4.0]]}
        cfg = write_cfg(tmp_path, doc)
        assert cli.main(["synthesize", "--config", cfg]) == 0


class TestConsoleScript:
    def test_help_runs(self):
        proc = subprocess.run([sys.executable, "-m", "switchstab.cli", "--help"]
                              if False else ["switchstab", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "certify" in proc.stdout and "synthesize" in proc.stdout

    def test_unknown_command_rejected(self):
        proc = subprocess.run(["switchstab", "flibber"], capture_output=True, text=True)
        assert proc.returncode == 2

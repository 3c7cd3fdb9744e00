import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from anneal_lab import cli
from anneal_lab.ingest import load_curves
from anneal_lab.lawfit import FitReport, mape, smooth_curve
from anneal_lab.schedule import build_piecewise

from conftest import TOY_CONFIG


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_predicted(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "predicted_loss"]
    return np.array([int(r[0]) for r in rows[1:]]), np.array([float(r[1]) for r in rows[1:]])


class TestFit:
    def test_fixture_family_fit(self, toy_report):
        path, code = toy_report
        assert code == 0
        report = FitReport.from_json(path.read_text())
        assert len(report.curves) == 6
        assert report.mean_mape_percent < 0.5
        assert report.converged

    def test_no_manifest_is_usage_error(self, capsys):
        code, out, err = run(capsys, "fit")
        assert code == 1 and "manifest" in err and out == ""

    def test_unreadable_curve_names_path(self, capsys, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"curve_path": "missing.csv", "model_size_params": 1}))
        code, _, err = run(capsys, "fit", "--manifest", tmp_path / "m.json", "--output", tmp_path / "r.json")
        assert code == 1 and "missing.csv" in err

    def test_nonconverged_exit_code_still_writes(self, capsys, toy_dir, tmp_path):
        out = tmp_path / "r.json"
        code, _, _ = run(capsys, "fit", "--manifest", toy_dir / "manifest.json", "--max-iter", 1, "--output", out)
        assert code == 2
        assert FitReport.from_json(out.read_text()).converged is False

    def test_json_stdout(self, capsys, toy_dir, tmp_path):
        out = tmp_path / "r.json"
        code, stdout, err = run(
            capsys, "fit", "--manifest", toy_dir / "manifest.json", "--max-iter", 3, "--output", out, "--format", "json"
        )
        assert json.loads(stdout) == json.loads(out.read_text())
        assert "mean MAPE" in err


class TestPredict:
    def test_same_schedule_reproduces_in_sample_mape(self, capsys, toy_dir, toy_report, tmp_path):
        report_path, _ = toy_report
        report = FitReport.from_json(report_path.read_text())
        curve = load_curves([toy_dir / "manifest.json"])[0]
        (tmp_path / "s.json").write_text(curve.meta.schedule.to_json())
        out = tmp_path / "p.csv"
        code, _, _ = run(capsys, "predict", "--report", report_path, "--schedule-json", tmp_path / "s.json", "--output", out)
        assert code == 0
        steps, pred = read_predicted(out)
        observed = smooth_curve(curve, 50).losses[steps]
        in_sample = next(c.mape_percent for c in report.curves if c.label == curve.label)
        assert abs(mape(pred, observed) - in_sample) <= 1e-9

    def test_cross_scheduler_on_fixture(self, capsys, toy_dir, toy_cosine_manifest, tmp_path):
        rep = tmp_path / "cos.json"
        code, _, _ = run(capsys, "fit", "--manifest", toy_cosine_manifest, "--output", rep)
        assert code == 0
        wsd = [c for c in load_curves([toy_dir / "manifest.json"]) if c.meta.schedule.kind == "wsd"]
        for c in wsd:
            s = c.meta.schedule
            out = tmp_path / f"{c.label}.csv"
            code, _, _ = run(
                capsys, "predict", "--report", rep, "--schedule", "wsd", "--eta-max", s.eta_max, "--steps", s.t_total,
                "--warmup", s.t_warmup, "--ratio", s.annealing_ratio, "--output", out,
            )
            assert code == 0
            steps, pred = read_predicted(out)
            assert mape(pred, c.losses[steps]) < 1.0

    def test_equal_cumulative_lr_gives_identical_files(self, capsys, toy_report, tmp_path):
        data = json.loads(toy_report[0].read_text())
        data["coefficients"]["lambda_M"] = 0.0
        rep = tmp_path / "flat.json"
        rep.write_text(json.dumps(data))
        a = build_piecewise([(0, 1e-2), (300, 5e-3)], 600)
        b = build_piecewise([(0, 1e-2), (300, 5e-3), (450, 5e-3)], 600)
        for name, spec in (("a", a), ("b", b)):
            (tmp_path / f"{name}.json").write_text(spec.to_json())
            code, _, _ = run(capsys, "predict", "--report", rep, "--schedule-json", tmp_path / f"{name}.json",
                             "--output", tmp_path / f"{name}.csv")
            assert code == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_summary(self, capsys, toy_report, tmp_path):
        code, out, _ = run(capsys, "predict", "--report", toy_report[0], "--schedule", "cosine", "--eta-max", 0.01,
                           "--steps", 500, "--output", tmp_path / "c.csv", "--format", "json")
        summary = json.loads(out)
        assert code == 0 and {"final_loss", "S_final", "M_final"} <= set(summary)
        assert summary == json.loads((tmp_path / "c.summary.json").read_text())

    def test_invalid_schedule(self, capsys, toy_report, tmp_path):
        code, _, err = run(capsys, "predict", "--report", toy_report[0], "--schedule", "wsd", "--eta-max", 0.01,
                           "--steps", 100, "--warmup", 90, "--ratio", 0.5, "--output", tmp_path / "x.csv")
        assert code == 1 and "t_warmup <= t_constant" in err


class TestRecommend:
    def test_preset_moe_steps(self, capsys, tmp_path):
        code, out, _ = run(capsys, "recommend", "--preset", "moe", "--steps", 100_000, "--output", tmp_path / "r.json")
        assert code == 0
        assert float(out) == pytest.approx(0.111, rel=0.01)
        assert "literature value" in json.loads((tmp_path / "r.json").read_text())["provenance"]

    def test_preset_dense_lr(self, capsys, tmp_path):
        code, out, _ = run(capsys, "recommend", "--preset", "dense", "--steps", 100_000, "--eta-max", 4e-5,
                           "--output", tmp_path / "r.json", "--format", "json")
        assert code == 0 and json.loads(out)["r_opt"] == pytest.approx(0.046, rel=0.01)

    def test_fitted_report_sweep(self, capsys, toy_report, tmp_path):
        out = tmp_path / "rec.json"
        code, stdout, _ = run(capsys, "recommend", "--report", toy_report[0], "--steps", 1000, "--eta-max", 0.01,
                              "--warmup", 100, "--output", out)
        assert code == 0
        data = json.loads(out.read_text())
        losses = [g["final_loss"] for g in data["grid"]]
        assert data["r_opt"] == data["grid"][int(np.argmin(losses))]["R"]
        assert float(stdout) == data["r_opt"]
        with open(out.with_suffix(".csv")) as fh:
            assert next(csv.reader(fh)) == ["R", "final_loss", "delta_loss"]

    def test_both_sources_rejected(self, capsys, toy_report, tmp_path):
        code, out, err = run(capsys, "recommend", "--preset", "moe", "--report", toy_report[0], "--steps", 100,
                             "--output", tmp_path / "r.json")
        assert code == 1 and "ambiguous" in err and out == ""

    def test_sweep_subcommand_csv(self, capsys, toy_report, tmp_path):
        code, out, _ = run(capsys, "sweep", "--report", toy_report[0], "--steps", 1000, "--eta-max", 0.01,
                           "--ratios", 0.1, 0.3, 0.5, "--output", tmp_path / "s.json", "--format", "csv")
        assert code == 0 and out.splitlines()[0] == "R,final_loss,delta_loss" and len(out.splitlines()) == 4


@pytest.fixture(scope="module")
def table(toy_dir):
    out = toy_dir.parent / "compare.csv"
    code = cli.main(["compare-momentum", "--manifest", str(toy_dir / "manifest.json"),
                     "--lambda", "0.99", "--lambda", "0.999", "--output", str(out)])
    with open(out) as fh:
        return code, list(csv.DictReader(fh))


class TestCompareMomentum:

    def test_one_row_per_variant(self, table):
        code, rows = table
        assert code == 0
        assert [r["momentum"] for r in rows] == ["ASMT", "CMMT(lambda=0.99)", "CMMT(lambda=0.999)"]
        assert all(np.isfinite(float(r["mean_mape_percent"])) for r in rows)
        assert len(rows[0]) == 4 + 6

    def test_asmt_not_worse_than_cmmt_0999(self, table):
        _, rows = table
        asmt = float(rows[0]["mean_mape_percent"])
        cmmt = float(rows[2]["mean_mape_percent"])
        assert asmt <= 1.10 * cmmt

    @pytest.mark.parametrize("lam", ["1.0", "0", "-0.5", "1.5"])
    def test_lambda_outside_unit_interval(self, capsys, toy_dir, lam, tmp_path):
        code, out, _ = run(capsys, "compare-momentum", "--manifest", toy_dir / "manifest.json", "--lambda", lam,
                           "--output", tmp_path / "c.csv")
        assert code == 1 and out == ""


class TestSimulate:
    def config(self, tmp_path, **changes):
        cfg = json.loads(TOY_CONFIG.read_text())
        cfg.update(total_steps=[200], seeds=[0, 1])
        cfg.update(changes)
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg))
        return p

    def test_outputs(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", "--config", self.config(tmp_path), "--output", tmp_path / "o")
        assert code == 0
        files = sorted(p.name for p in (tmp_path / "o").iterdir())
        assert len([f for f in files if f.endswith(".csv")]) == 4 and "manifest.json" in files
        assert len(load_curves([tmp_path / "o" / "manifest.json"])) == 4

    def test_rerun_byte_identical(self, capsys, tmp_path):
        cfg = self.config(tmp_path)
        for d in ("a", "b"):
            assert run(capsys, "simulate", "--config", cfg, "--output", tmp_path / d, "--workers", 2)[0] == 0
        for p in sorted((tmp_path / "a").iterdir()):
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()

    def test_divergence_partial_failure(self, capsys, tmp_path):
        # 10x the stability limit 2/lambda_max = 0.02
        cfg = self.config(tmp_path, gammas=[0.01, 0.2], seeds=[0])
        code, out, err = run(capsys, "simulate", "--config", cfg, "--output", tmp_path / "o", "--format", "json")
        assert code == 3
        doc = json.loads(out)
        assert len(doc["curves"]) == 2 and len(doc["failures"]) == 2
        assert "cosine-T200-g0.2-s0" in err and "step" in err
        assert len(load_curves([tmp_path / "o" / "manifest.json"])) == 2

    def test_seed_flag_fills_missing_seeds(self, capsys, tmp_path):
        cfg = json.loads(TOY_CONFIG.read_text())
        del cfg["seeds"]
        cfg["total_steps"] = [200]
        (tmp_path / "c.json").write_text(json.dumps(cfg))
        run(capsys, "simulate", "--config", tmp_path / "c.json", "--output", tmp_path / "o", "--seed", 7)
        assert all(c.meta.seed == 7 for c in load_curves([tmp_path / "o" / "manifest.json"]))

    def test_bad_config(self, capsys, tmp_path):
        (tmp_path / "c.json").write_text("{not json")
        assert run(capsys, "simulate", "--config", tmp_path / "c.json", "--output", tmp_path / "o")[0] == 1
        bad = self.config(tmp_path, learning_rate=3)
        code, _, err = run(capsys, "simulate", "--config", bad, "--output", tmp_path / "o")
        assert code == 1 and "learning_rate" in err


class TestContract:
    def test_usage_errors_exit_one(self, capsys):
        assert run(capsys, "frobnicate")[0] == 1
        assert run(capsys)[0] == 1

    def test_threads_env_caps_workers(self, monkeypatch):
        monkeypatch.setenv(cli.THREADS_ENV, "2")
        assert cli.worker_count(8) == 2
        monkeypatch.setenv(cli.THREADS_ENV, "zero")
        with pytest.raises(cli.UsageError):
            cli.worker_count(8)
        monkeypatch.delenv(cli.THREADS_ENV)
        assert cli.worker_count(3) == 3

    def test_bad_threads_env_exit_one(self, capsys, monkeypatch, tmp_path):
        monkeypatch.setenv(cli.THREADS_ENV, "-1")
        cfg = json.loads(TOY_CONFIG.read_text())
        cfg["total_steps"] = [200]
        (tmp_path / "c.json").write_text(json.dumps(cfg))
        code, _, err = run(capsys, "simulate", "--config", tmp_path / "c.json", "--output", tmp_path / "o")
        assert code == 1 and cli.THREADS_ENV in err

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "anneal_lab", "recommend", "--preset", "moe1b-steps-v1", "--steps", "30000",
             "--output", str(tmp_path / "r.json"), "--format", "json"],
            capture_output=True, text=True, check=False,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["r_opt"] == pytest.approx(0.348, rel=0.02)

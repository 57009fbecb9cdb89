import json

import numpy as np
import pytest
from click.testing import CliRunner

from entrenet.cli import main
from entrenet.data import synthetic_trade_matrix, write_matrix_csv


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def bank_csv(tmp_path):
    path = tmp_path / "banks.csv"
    lines = ["year,bank_id,bank_name,category,call_loan,call_money"]
    rng = np.random.default_rng(1)
    specs = [("major", 3), ("trust", 2), ("leading_regional", 6), ("second_tier_regional", 4)]
    k = 0
    for cat, count in specs:
        for _ in range(count):
            loan, money = rng.uniform(0.5, 5.0, 2)
            lines.append(f"2005,b{k:02d},Bank {k},{cat},{loan},{money}")
            k += 1
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def trade_csv(tmp_path):
    path = tmp_path / "trade.csv"
    with open(path, "w") as fh:
        write_matrix_csv(fh, synthetic_trade_matrix(n=8).matrix)
    return path


class TestReconstruct:
    def test_writes_three_outputs(self, runner, bank_csv, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, [
            "reconstruct", "--input", str(bank_csv), "--year", "2005",
            "--beta", "100", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads((out / "solution_report.json").read_text())
        assert report["converged"] is True
        assert report["kkt_residual"] <= 1e-8
        assert (out / "solution_t.csv").exists()
        assert (out / "solution_p.csv").exists()
        assert (out / "marginal_report.csv").exists()
        assert "config_hash" in report["provenance"]

    def test_missing_input_is_usage_error(self, runner):
        result = runner.invoke(main, ["reconstruct", "--year", "2005"])
        assert result.exit_code == 2

    def test_nonexistent_input_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, [
            "reconstruct", "--input", str(tmp_path / "nope.csv"), "--year", "2005",
        ])
        assert result.exit_code == 2

    def test_bad_data_exit_code(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("year,bank_id,bank_name,category,call_loan,call_money\n"
                       "2005,b0,Bank,major,-3,1\n")
        result = runner.invoke(main, [
            "reconstruct", "--input", str(bad), "--year", "2005",
        ])
        assert result.exit_code == 3

    def test_config_file_with_flag_override(self, runner, bank_csv, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"input_path": str(bank_csv), "year": 2005, "beta": 1.0}))
        out = tmp_path / "o1"
        result = runner.invoke(main, [
            "reconstruct", "--config", str(cfg), "--beta", "50", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads((out / "solution_report.json").read_text())
        assert report["provenance"]["config"]["beta"] == 50.0
        assert report["provenance"]["config"]["year"] == 2005


class TestAnalyze:
    def test_outputs_and_determinism(self, runner, bank_csv, tmp_path):
        rec_out = tmp_path / "rec"
        assert runner.invoke(main, [
            "reconstruct", "--input", str(bank_csv), "--year", "2005", "--out", str(rec_out),
        ]).exit_code == 0
        results = []
        for name in ("a1", "a2"):
            out = tmp_path / name
            result = runner.invoke(main, [
                "analyze", "--input", str(rec_out / "solution_t.csv"),
                "--percentile", "80", "--seed", "3", "--samples", "5", "--out", str(out),
            ])
            assert result.exit_code == 0, result.output
            payload = json.loads((out / "metrics.json").read_text())
            del payload["provenance"]
            results.append(payload)
            assert (out / "edges.csv").exists()
            assert (out / "communities.csv").exists()
            assert (out / "ccdf.csv").exists()
        assert results[0] == results[1]

    def test_retention_ratio(self, runner, bank_csv, tmp_path):
        rec_out = tmp_path / "rec"
        runner.invoke(main, [
            "reconstruct", "--input", str(bank_csv), "--year", "2005", "--out", str(rec_out),
        ])
        out = tmp_path / "an"
        result = runner.invoke(main, [
            "analyze", "--input", str(rec_out / "solution_t.csv"),
            "--samples", "2", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads((out / "metrics.json").read_text())
        ratio = payload["retained_link_count"] / payload["positive_link_count"]
        assert abs(ratio - 0.2) <= 1.0 / payload["positive_link_count"]

    def test_single_sample_zero_sd(self, runner, bank_csv, tmp_path):
        rec_out = tmp_path / "rec"
        runner.invoke(main, [
            "reconstruct", "--input", str(bank_csv), "--year", "2005", "--out", str(rec_out),
        ])
        out = tmp_path / "an1"
        result = runner.invoke(main, [
            "analyze", "--input", str(rec_out / "solution_t.csv"),
            "--samples", "1", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads((out / "metrics.json").read_text())
        assert all(sd == 0.0 for sd in payload["ensemble"]["stds"].values())


class TestValidate:
    def test_density_table(self, runner, trade_csv, tmp_path):
        out = tmp_path / "val"
        result = runner.invoke(main, [
            "validate", "--input", str(trade_csv), "--beta", "50", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads((out / "fit_reports.json").read_text())
        dens = payload["densities"]
        assert dens["reconstruction_no_link"]["no_cut"] == pytest.approx(1.0)
        assert dens["reconstruction_with_link"]["q2_cut"] == pytest.approx(
            dens["trade_data"]["q2_cut"]
        )
        table = (out / "density_table.csv").read_text()
        assert "item,no_cut,q2_cut" in table

    def test_target_density_mode(self, runner, trade_csv, tmp_path):
        out = tmp_path / "val2"
        result = runner.invoke(main, [
            "validate", "--input", str(trade_csv), "--beta", "50",
            "--target-density", "0.25", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads((out / "fit_reports.json").read_text())
        n = 8
        one_link = 1.0 / (n * (n - 1))
        assert abs(payload["target_density"]["achieved"] - 0.25) <= one_link + 1e-12

    def test_synthetic_fallback(self, runner, tmp_path):
        out = tmp_path / "val3"
        result = runner.invoke(main, ["validate", "--beta", "10", "--out", str(out)])
        assert result.exit_code == 0, result.output


class TestSweep:
    def test_single_beta_single_row(self, runner, trade_csv, tmp_path):
        out = tmp_path / "sw"
        result = runner.invoke(main, [
            "sweep", "--input", str(trade_csv), "--betas", "10", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        rows = [l for l in (out / "sweep.csv").read_text().splitlines()
                if l and not l.startswith("#")]
        assert rows[0] == "beta,objective,rmse,slope_a,intercept_b,density"
        assert len(rows) == 2

    def test_empty_grid_usage_error(self, runner, trade_csv):
        result = runner.invoke(main, [
            "sweep", "--input", str(trade_csv), "--betas", "",
        ])
        assert result.exit_code == 2

    def test_monotone_beta_column(self, runner, trade_csv, tmp_path):
        out = tmp_path / "sw2"
        result = runner.invoke(main, [
            "sweep", "--input", str(trade_csv), "--betas", "100,0,10", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        rows = [l for l in (out / "sweep.csv").read_text().splitlines()
                if l and not l.startswith("#")][1:]
        betas = [float(r.split(",")[0]) for r in rows]
        assert betas == sorted(betas)

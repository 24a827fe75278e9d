import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from transient_scan.cli import _compress, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def as_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    assert code == 0, err
    return json.loads(out)


@pytest.fixture
def prices(tmp_path):
    rng = np.random.default_rng(8)
    T, names = 250, ["AAA", "BBB", "CCC", "DDD"]
    steps = 0.01 * rng.standard_normal((T, 4))
    steps[200:, 2] += 0.012  # drift in one channel late in the sample
    values = 50 * np.exp(np.cumsum(steps, axis=0))
    dates = np.arange(np.datetime64("2021-01-01"), np.datetime64("2021-01-01") + T)
    path = tmp_path / "prices.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *names])
        for d, row in zip(dates, values):
            w.writerow([str(d), *(f"{v:.6f}" for v in row)])
    return path


def test_fdp_approx_prints_table_value(capsys):
    code, out, _ = run(capsys, "fdp", "--chart", "cusum", "--delta", "0.5", "--d", "10.8",
                       "--L", "20", "--approx")
    assert code == 0
    assert "0.0063" in out


def test_json_record_round_trips(capsys):
    rec = as_json(capsys, "fdp", "--chart", "ewma", "--beta", "0.05", "--b", "2.95", "--L", "20")
    assert rec["command"] == "fdp"
    assert rec["config"]["chart"]["kind"] == "ewma"
    assert rec["result"]["fdp"] == pytest.approx(0.0103, abs=1e-4)
    assert json.loads(json.dumps(rec)) == rec


def test_simulated_fdp_reports_standard_error(capsys):
    rec = as_json(capsys, "fdp", "--chart", "ewma", "--beta", "0.05", "--b", "2.95", "--L", "20",
                  "--simulate", "--reps", "2000", "--seed", "3")
    res = rec["result"]
    assert res["std_error"] > 0
    assert rec["config"]["simulation"]["seed"] == 3


def test_seed_falls_back_to_environment(capsys, monkeypatch):
    argv = ("fdp", "--chart", "ma", "--w", "20", "--h", "0.6578", "--L", "20",
            "--simulate", "--reps", "1500")
    monkeypatch.setenv("TRANSIENT_SCAN_SEED", "42")
    a = as_json(capsys, *argv)
    b = as_json(capsys, *argv, "--seed", "42")
    assert a["config"]["simulation"]["seed"] == 42
    assert a["result"] == b["result"]


def test_pod_simulate_reports_delay(capsys):
    rec = as_json(capsys, "pod", "--chart", "ma", "--w", "20", "--h", "0.6578", "--L", "20",
                  "--mu", "0.5", "1.0", "--simulate", "--reps", "2000", "--seed", "1")
    rows = rec["result"]["rows"]
    assert [r["mu"] for r in rows] == [0.5, 1.0]
    assert rows[0]["pod"] < rows[1]["pod"]
    assert 1 <= rows[1]["delay"] <= 20


def test_pod_approx_carries_regime_and_warnings(capsys):
    rec = as_json(capsys, "pod", "--chart", "ewma", "--beta", "0.05", "--b", "2.95",
                  "--L", "20", "--mu", "0.2", "1.0")
    rows = rec["result"]["rows"]
    assert rows[0]["regime"] == "local-integral"
    assert rows[1]["regime"] == "normal-law"
    assert rows[1]["pod"] == pytest.approx(0.854, abs=1e-3)


def test_calibrate_analytic(capsys):
    rec = as_json(capsys, "calibrate", "--chart", "ma", "--w", "20", "--target-fdp", "0.01",
                  "--L", "20")
    assert rec["result"]["threshold"] == pytest.approx(0.6494, abs=1e-3)


def test_calibrate_defaults_to_simulation_without_usable_formula(capsys):
    rec = as_json(capsys, "calibrate", "--chart", "mcusum", "--N", "20", "--w0", "20", "--w1", "50",
                  "--delta", "1.118", "--target-fdp", "0.02", "--L", "20", "--reps", "10000")
    assert rec["result"]["method"] == "monte-carlo"
    forced = as_json(capsys, "calibrate", "--chart", "mcusum", "--N", "20", "--w0", "20",
                     "--w1", "50", "--delta", "1.118", "--target-fdp", "0.02", "--L", "20",
                     "--closed-form")
    assert forced["result"]["method"] == "closed-form"


def test_forcing_closed_form_without_formula_is_numeric_failure(capsys):
    code, _, err = run(capsys, "calibrate", "--chart", "mewma-hard", "--N", "20", "--beta", "0.05",
                       "--hard-cut", "0.25", "--target-fdp", "0.01", "--L", "10", "--closed-form")
    assert code == 3
    assert "calibrate_mc" in err


def test_table_rejects_zero_reps(capsys):
    code, _, _ = run(capsys, "table", "--id", "t2", "--reps", "0")
    assert code == 1


def test_unknown_table_is_usage_error(capsys):
    code, _, _ = run(capsys, "table", "--id", "t7", "--reps", "1000")
    assert code == 1


def test_table_subset_written_to_file(capsys, tmp_path):
    out = tmp_path / "rows.csv"
    code, _, _ = run(capsys, "table", "--id", "t1", "--design", "CUSUM(1.0)", "--L", "20",
                     "--reps", "1000", "--seed", "2", "--out", str(out))
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert rows and {"design", "estimate", "std_error", "published"} <= set(rows[0])


def test_missing_required_flag_exits_1(capsys):
    code, _, _ = run(capsys, "fdp", "--chart", "ewma", "--L", "20")
    assert code == 1


def test_domain_error_exits_3(capsys):
    code, _, _ = run(capsys, "pod", "--chart", "cusum", "--delta", "1.0", "--d", "5.88",
                     "--L", "20", "--mu", "0.3")
    assert code == 3


def test_missing_input_exits_2(capsys, tmp_path):
    code, _, _ = run(capsys, "analyze", "--input", str(tmp_path / "none.csv"), "--chart", "mewma",
                     "--beta", "0.05", "--b", "6.5")
    assert code == 2


def test_analyze_finds_drifting_channel(capsys, prices):
    rec = as_json(capsys, "analyze", "--input", str(prices), "--chart", "ewma", "--beta", "0.05",
                  "--b", "2.95", "--channel", "CCC")
    res = rec["result"]
    assert res["alarm_level"] == pytest.approx(0.4724, abs=1e-4)
    assert res["first_alarm"] is not None and res["first_alarm"] > 150
    assert len(res["trace"]) == res["T"] == 249


def test_analyze_multichannel_whitening_options(capsys, prices):
    base = ("analyze", "--input", str(prices), "--chart", "mewma", "--beta", "0.05", "--b", "4.5")
    whitened = as_json(capsys, *base)["result"]
    independent = as_json(capsys, *base, "--independent")["result"]
    assert whitened["whitening"] == "correlation"
    assert "largest_eigenvalue" in whitened
    assert independent["whitening"] == "none"


def test_one_dimensional_chart_needs_one_channel(capsys, prices):
    code, _, _ = run(capsys, "analyze", "--input", str(prices), "--chart", "ewma",
                     "--beta", "0.05", "--b", "2.95")
    assert code == 1


def test_charts_emits_plot_series(capsys, prices, tmp_path):
    out = tmp_path / "trace.csv"
    code, _, _ = run(capsys, "charts", "--input", str(prices), "--chart", "mewma-hard",
                     "--beta", "0.05", "--level", "0.396", "--hard-cut", "0.25",
                     "--emit", str(out))
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 249
    assert {"t", "date", "AAA", "statistic", "level", "alarm"} <= set(rows[0])
    assert float(rows[0]["level"]) == pytest.approx(0.396)


def test_compress_runs():
    assert _compress([1, 2, 3, 7, 9, 10]) == "1-3, 7, 9-10"
    assert _compress([]) == "none"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "transient_scan", "fdp", "--chart", "ma",
                           "--w", "20", "--h", "0.6578", "--L", "20"],
                          capture_output=True, text=True, env=dict(os.environ))
    assert proc.returncode == 0
    assert "0.009" in proc.stdout


@pytest.mark.optional_data
def test_single_stock_alarm_day(capsys, dow_file):
    rec = as_json(capsys, "analyze", "--input", dow_file, "--chart", "ewma", "--beta", "0.05",
                  "--b", "2.95", "--channel", "CVX")
    assert 208 in rec["result"]["alarm_times"]

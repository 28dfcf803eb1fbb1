import csv
import json

import numpy as np
import pytest

from markov_sa.cli import main
from markov_sa.config import paper_config
from markov_sa.figures import reproduce


@pytest.fixture
def cfg_file(tmp_path):
    cfg = paper_config(M=8, N=2000, N0=50, schedules=[{"alpha0": 0.5, "rho": r} for r in (0.45, 0.6, 0.75)])
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return path


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_theory_default_config(capsys):
    assert main(["theory"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert [d["rho"] for d in out] == [0.15, 0.3, 0.45, 0.6, 0.75, 0.9]
    row = out[3]
    assert row["trace_sigma_PR"] == pytest.approx(140 / 3)
    np.testing.assert_allclose(row["beta_theta"], [20.0, -10 / 3], atol=1e-9)
    np.testing.assert_allclose(row["upsilon_bar_star"], [-8.0, 4 / 3], atol=1e-10)


def test_simulate_writes_schema(cfg_file, tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg_file), "--out", str(out)]) == 0
    assert header(out / "summary.csv") == [
        "a", "rho", "alpha0", "M", "N", "N0",
        "mean_1", "mean_2", "bias_pred_1", "bias_pred_2",
        "cov_11", "cov_12", "cov_21", "cov_22",
        "trace_cov_times_N", "trace_sigma_pr", "mse", "mse_pred",
    ]
    assert header(out / "curves.csv") == ["rho", "n", "mse_raw", "mse_pr", "mse_pr_pred", "finite_time_bound"]
    assert len(rows(out / "summary.csv")) == 3
    assert len(rows(out / "runs.csv")) == 3 * 8
    meta = json.loads((out / "meta.json").read_text())
    assert meta["config"]["M"] == 8


def test_global_flags_either_side(cfg_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--config", str(cfg_file), "--seed", "5", "--out", str(a), "simulate"]) == 0
    assert main(["simulate", "--config", str(cfg_file), "--seed", "5", "--out", str(b), "--threads", "3"]) == 0
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()
    assert (a / "curves.csv").read_bytes() == (b / "curves.csv").read_bytes()


def test_seed_flag_changes_output(cfg_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--config", str(cfg_file), "--seed", "1", "--out", str(a)])
    main(["simulate", "--config", str(cfg_file), "--seed", "2", "--out", str(b)])
    assert (a / "summary.csv").read_bytes() != (b / "summary.csv").read_bytes()


def test_compare(cfg_file, tmp_path, capsys):
    assert main(["compare", "--config", str(cfg_file), "--out", str(tmp_path / "c")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out) == 3 and "var_ratio" in out[0]
    assert (tmp_path / "c" / "compare.csv").exists()


@pytest.mark.parametrize("figure,table", [("fig1", "summary.csv"), ("fig2", "curves.csv"), ("fig4", "ratios.csv")])
def test_reproduce(cfg_file, tmp_path, figure, table, capsys):
    out = tmp_path / figure
    assert main(["reproduce", "--figure", figure, "--config", str(cfg_file), "--out", str(out), "--emit-plots"]) == 0
    assert (out / table).exists()
    assert list(out.glob("*.svg"))


def test_fig1_row_count(cfg_file, tmp_path):
    out = tmp_path / "f1"
    main(["reproduce", "--figure", "fig1", "--config", str(cfg_file), "--out", str(out)])
    assert len(rows(out / "summary.csv")) == 3


def test_reproduce_byte_identical(cfg_file, tmp_path):
    for d in ("x", "y"):
        main(["reproduce", "--figure", "fig2", "--config", str(cfg_file), "--out", str(tmp_path / d), "--emit-plots"])
    for name in ("summary.csv", "curves.csv", "runs.csv", "meta.json", "fig2_mse.svg"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_fig4_over_several_chains(tmp_path):
    cfg = paper_config(
        model={"kind": "paper_section3", "a": [0.3, 0.7]}, M=4, N=1000, N0=10,
        schedules=[{"alpha0": 0.5, "rho": 0.6}], emit_plots=True,
    )
    files = reproduce("fig4", cfg, tmp_path)
    r = rows(files["ratios"])
    assert [float(x["a"]) for x in r] == [0.3, 0.7]
    assert files["plot"].exists()


def test_decomp(cfg_file, capsys):
    assert main(["decomp", "--config", str(cfg_file), "--steps", "5000"]) == 0
    reps = json.loads(capsys.readouterr().out)
    assert len(reps) == 3
    for r in reps:
        assert r["steps"] == 4999
        assert r["max_scaled_residual"] <= 1e-9
        assert r["max_upsilon_fd_gap"] <= 1e-9


def test_rates(tmp_path, capsys):
    cfg = paper_config(M=8, N=20_000, N0=100, schedules=[{"alpha0": 0.5, "rho": 0.6}])
    path = tmp_path / "r.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert main(["rates", "--config", str(path)]) == 0
    (rep,) = json.loads(capsys.readouterr().out)
    assert rep["fit_ns"] == [2000, 6666, 20000]
    assert {"bias_vs_alpha", "raw_mse_vs_alpha", "n_trace_cov_vs_n"} <= set(rep)


@pytest.mark.parametrize(
    "content,msg",
    [
        ('{"M": 1}', "M must be"),
        ('{"bogus": 3}', "unknown config keys"),
        ("{not json", "error"),
    ],
)
def test_config_errors(tmp_path, capsys, content, msg):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert main(["theory", "--config", str(path)]) == 2
    assert msg in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert main(["theory", "--config", str(tmp_path / "nope.json")]) == 2


def test_bad_figure():
    with pytest.raises(SystemExit):
        main(["reproduce", "--figure", "fig3"])

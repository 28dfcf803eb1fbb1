"""CSV tables and optional SVG plots for the two-state experiment."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError
from .harness import EnsembleResult, compare_theory, curves, run_ensemble, summarize

FIGURES = ("fig1", "fig2", "fig4")


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "nan" if np.isnan(v) else repr(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in r])


def summary_header(d: int) -> list:
    h = ["a", "rho", "alpha0", "M", "N", "N0"]
    h += [f"mean_{i}" for i in range(1, d + 1)]
    h += [f"bias_pred_{i}" for i in range(1, d + 1)]
    h += [f"cov_{i}{j}" for i in range(1, d + 1) for j in range(1, d + 1)]
    return h + ["trace_cov_times_N", "trace_sigma_pr", "mse", "mse_pred"]


def summary_row(s) -> list:
    return (
        [s.a, s.rho, s.alpha0, str(s.M), str(s.N), str(s.N0)]
        + list(s.mean)
        + list(s.bias_pred)
        + list(s.cov.ravel())
        + [s.trace_cov_times_N, s.trace_sigma_pr, s.mse, s.mse_pred]
    )


def write_summary(result: EnsembleResult, out: Path) -> list:
    sums = [summarize(p) for p in result.points]
    d = result.points[0].model.dim
    _write_csv(out / "summary.csv", summary_header(d), [summary_row(s) for s in sums])
    return sums


def write_runs(result: EnsembleResult, out: Path) -> None:
    d = result.points[0].model.dim
    header = ["a", "rho", "alpha0", "seed"]
    header += [f"theta_N_{i}" for i in range(1, d + 1)] + [f"theta_pr_N_{i}" for i in range(1, d + 1)]
    rows = []
    failed = {s for p in result.points for s, _ in p.failed}
    for p in result.points:
        ok_seeds = [s for s in p.seeds.tolist() if s not in failed]
        for s, th, pr in zip(ok_seeds, p.theta_final, p.pr_final):
            rows.append([p.a, p.schedule.rho, p.schedule.alpha0, str(s)] + list(th) + list(pr))
    _write_csv(out / "runs.csv", header, rows)


def write_curves(result: EnsembleResult, out: Path) -> list:
    labels = {p.label for p in result.points}
    if len(labels) > 1:
        raise ConfigError("curves need a single model; got several values of a")
    rows, data = [], []
    for p in result.points:
        c = curves(p)
        data.append((p, c))
        for k, n in enumerate(c["n"]):
            rows.append([p.schedule.rho, str(int(n)), c["mse_raw"][k], c["mse_pr"][k],
                         c["mse_pr_pred"][k], c["finite_time_bound"][k]])
    _write_csv(out / "curves.csv", ["rho", "n", "mse_raw", "mse_pr", "mse_pr_pred", "finite_time_bound"], rows)
    return data


def write_comparison(result: EnsembleResult, out: Path, name="compare.csv") -> list:
    rows = [compare_theory(summarize(p), p.model, p.schedule) for p in result.points]
    dicts = [r.as_dict() for r in rows]
    header = list(dicts[0])
    _write_csv(out / name, header, [[d[k] for k in header] for d in dicts])
    return rows


def write_meta(result: EnsembleResult, out: Path, figure=None) -> None:
    # out_dir is left out so the file does not depend on where it was written
    config = {k: v for k, v in result.config.to_dict().items() if k != "out_dir"}
    meta = {
        "figure": figure,
        "config": config,
        "covariance_normalization": "sample covariance, denominator M-1",
        "finite_time_bound": "leading term only; fast-vanishing remainder omitted",
        "failed_runs": [
            {"a": p.a, "rho": p.schedule.rho, "seed": int(s), "index": int(i)} for p in result.points for s, i in p.failed
        ],
    }
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "markov_sa"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_fig1(sums, out: Path) -> None:
    plt = _plt()
    rhos = np.array([s.rho for s in sums])
    d = len(sums[0].mean)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for i in range(d):
        axes[0].plot(rhos, [s.bias[i] for s in sums], "o-", label=f"empirical bias {i + 1}")
        axes[0].plot(rhos, [s.bias_pred[i] for s in sums], "k--", lw=0.8)
    axes[0].set_xlabel("rho")
    axes[0].set_ylabel("mean of theta_pr_N - theta*")
    axes[0].set_yscale("symlog", linthresh=1e-4)
    axes[0].legend()
    axes[1].semilogy(rhos, [s.trace_cov_times_N for s in sums], "o-", label="N trace(cov)")
    axes[1].semilogy(rhos, [s.trace_sigma_pr for s in sums], "k--", label="trace(Sigma_PR)")
    axes[1].set_xlabel("rho")
    axes[1].legend()
    fig.tight_layout()
    _save(fig, out / "fig1_bias_var.svg")
    plt.close(fig)


def plot_fig2(data, out: Path) -> None:
    plt = _plt()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for p, c in data:
        line, = axes[0].loglog(c["n"], c["mse_raw"], label=f"rho={p.schedule.rho}")
        if np.all(np.isfinite(c["finite_time_bound"])):
            axes[0].loglog(c["n"], c["finite_time_bound"], "--", color=line.get_color(), lw=0.8)
        sel = c["n"] > p.N0
        line, = axes[1].loglog(c["n"][sel], c["mse_pr"][sel], label=f"rho={p.schedule.rho}")
        axes[1].loglog(c["n"][sel], c["mse_pr_pred"][sel], "--", color=line.get_color(), lw=0.8)
    axes[0].set_title("raw iterates (dashed: finite-time bound)")
    axes[1].set_title("averaged iterates (dashed: approximation)")
    for ax in axes:
        ax.set_xlabel("n")
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, out / "fig2_mse.svg")
    plt.close(fig)


def plot_fig4(rows, out: Path) -> None:
    plt = _plt()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for a in sorted({r.a for r in rows}, key=lambda v: (v is None, v)):
        sel = [r for r in rows if r.a == a]
        rhos = [r.rho for r in sel]
        axes[0].plot(rhos, [r.bias_ratio for r in sel], "o-", label=f"a={a}")
        axes[1].plot(rhos, [r.var_ratio for r in sel], "o-", label=f"a={a}")
    axes[0].set_ylabel("empirical / predicted bias")
    axes[1].set_ylabel("empirical / optimal variance")
    for ax in axes:
        ax.axhline(1.0, color="k", lw=0.5)
        ax.set_xlabel("rho")
        ax.set_yscale("log")
        ax.legend()
    fig.tight_layout()
    _save(fig, out / "fig4_ratios.svg")
    plt.close(fig)


def reproduce(figure: str, config: ExperimentConfig, out_dir=None, threads: int = 1, result=None) -> dict:
    """Run the ensemble for ``figure`` and write its CSV (and optional SVG) files."""
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; choose from {FIGURES}")
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if result is None:
        result = run_ensemble(config, threads)
    files = {}
    write_runs(result, out)
    write_meta(result, out, figure)
    if figure == "fig1":
        sums = write_summary(result, out)
        files["summary"] = out / "summary.csv"
        if config.emit_plots:
            plot_fig1(sums, out)
            files["plot"] = out / "fig1_bias_var.svg"
    elif figure == "fig2":
        write_summary(result, out)
        data = write_curves(result, out)
        files["curves"] = out / "curves.csv"
        if config.emit_plots:
            plot_fig2(data, out)
            files["plot"] = out / "fig2_mse.svg"
    else:
        write_summary(result, out)
        rows = write_comparison(result, out, "ratios.csv")
        files["ratios"] = out / "ratios.csv"
        if config.emit_plots:
            plot_fig4(rows, out)
            files["plot"] = out / "fig4_ratios.svg"
    files["summary"] = out / "summary.csv"
    files["runs"] = out / "runs.csv"
    return files

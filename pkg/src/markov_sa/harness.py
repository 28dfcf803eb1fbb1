"""Seeded Monte Carlo ensembles and empirical-versus-theory comparisons."""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .engine import simulate_affine
from .errors import InsufficientGrid, ModelMismatch, NumericalDivergence
from .linear import (
    LinearSAModel,
    TheoryStats,
    finite_time_bound,
    mse_predict,
    section3_bound_params,
    theory_stats,
)
from .markov import sample_path
from .stepsize import StepSizeSchedule

log = logging.getLogger(__name__)

N_LOG_CHECKPOINTS = 60


def run_seed(base_seed: int, grid_index: int, run_index: int) -> int:
    """64-bit seed of one run; depends only on its grid position, never on scheduling."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(grid_index, run_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def checkpoints(N: int, N0: int) -> np.ndarray:
    pts = set(np.unique(np.round(np.logspace(0, np.log10(N), N_LOG_CHECKPOINTS)).astype(np.int64)).tolist())
    k = 1
    while k <= N:
        pts.update(p for p in (k, 3 * k) if p <= N)
        k *= 10
    pts.update({0, N0, N // 10, N // 3, N})
    return np.array(sorted(pts), dtype=np.int64)


def model_fingerprint(model: LinearSAModel) -> str:
    h = hashlib.sha256()
    for arr in (model.chain.P, model.A, model.b):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


@dataclass
class GridResult:
    """Per-run outputs of one (model, schedule) grid point."""

    a: float | None
    label: str
    model: LinearSAModel
    schedule: StepSizeSchedule
    N: int
    N0: int
    seeds: np.ndarray
    ns: np.ndarray               # checkpoint indices
    thetas: np.ndarray           # (M_ok, K, d) raw iterates at checkpoints
    prs: np.ndarray              # (M_ok, K, d) averaged iterates, NaN before burn-in
    failed: list = field(default_factory=list)  # (seed, index) of diverged runs

    @property
    def M(self) -> int:
        return self.thetas.shape[0]

    @property
    def theta_final(self) -> np.ndarray:
        return self.thetas[:, -1]

    @property
    def pr_final(self) -> np.ndarray:
        return self.prs[:, -1]


@dataclass
class EnsembleSummary:
    a: float | None
    rho: float
    alpha0: float
    M: int
    N: int
    N0: int
    thetastar: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    mse: float
    bias_pred: np.ndarray
    trace_sigma_pr: float
    mse_pred: float
    fingerprint: str
    failed_runs: int = 0

    @property
    def bias(self) -> np.ndarray:
        return self.mean - self.thetastar

    @property
    def trace_cov_times_N(self) -> float:
        return self.N * float(np.trace(self.cov))

    def mse_identity_gap(self) -> float:
        """``mse - (trace(cov) (M-1)/M + |bias|^2)``; zero up to round-off."""
        return self.mse - (np.trace(self.cov) * (self.M - 1) / self.M + self.bias @ self.bias)


def _one_run(model, alphas, N, N0, mean, std, seed, ns):
    rng = np.random.default_rng(seed)
    theta0 = mean + std * rng.standard_normal(mean.size)
    path = sample_path(model.chain, N, rng)
    thetas, prs, _, _ = simulate_affine(model.A, model.b, path, alphas, theta0, N0, ns)
    return thetas, prs


def run_grid_point(config, a, label, model, schedule, grid_index, threads=1) -> GridResult:
    N, N0 = config.N, config.N0
    alphas = schedule.alphas(N)
    ns = checkpoints(N, N0)
    mean, std = config.theta0_for(model)
    seeds = [run_seed(config.base_seed, grid_index, i) for i in range(config.M)]

    def task(seed):
        try:
            return _one_run(model, alphas, N, N0, mean, std, seed, ns)
        except NumericalDivergence as exc:
            return exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            outs = list(ex.map(task, seeds))
    else:
        outs = [task(s) for s in seeds]
    ok = [o for o in outs if not isinstance(o, Exception)]
    failed = [(s, o.index) for s, o in zip(seeds, outs) if isinstance(o, Exception)]
    for s, idx in failed:
        log.warning("run with seed %d diverged at index %d (rho=%g)", s, idx, schedule.rho)
    d = model.dim
    thetas = np.array([o[0] for o in ok]).reshape(len(ok), ns.size, d)
    prs = np.array([o[1] for o in ok]).reshape(len(ok), ns.size, d)
    return GridResult(a, label, model, schedule, N, N0, np.array(seeds, dtype=np.uint64), ns, thetas, prs, failed)


@dataclass
class EnsembleResult:
    config: ExperimentConfig
    points: list

    def summaries(self) -> list:
        return [summarize(p) for p in self.points]


def run_ensemble(config: ExperimentConfig, threads: int = 1) -> EnsembleResult:
    """M independent runs for every (model, schedule) grid point.

    Run ``i`` of grid point ``g`` is seeded by ``run_seed(base_seed, g, i)``
    and draws ``theta0`` before its noise path, so results do not depend on
    ``threads``.
    """
    grid = config.schedule_grid()
    points = []
    all_seeds = set()
    for mi, (a, label, model) in enumerate(config.models()):
        for si, sched in enumerate(grid):
            g = mi * len(grid) + si
            p = run_grid_point(config, a, label, model, sched, g, threads)
            points.append(p)
            all_seeds.update(p.seeds.tolist())
    if len(all_seeds) != config.M * len(points):
        raise RuntimeError("per-run seeds collide across the grid")
    return EnsembleResult(config, points)


def summarize(p: GridResult, stats: TheoryStats | None = None) -> EnsembleSummary:
    model, sched = p.model, p.schedule
    if stats is None:
        stats = theory_stats(model, sched)
    final = p.pr_final
    err = final - model.thetastar
    cov = np.cov(final, rowvar=False, ddof=1).reshape(model.dim, model.dim)
    return EnsembleSummary(
        a=p.a,
        rho=sched.rho,
        alpha0=sched.alpha0,
        M=p.M,
        N=p.N,
        N0=p.N0,
        thetastar=model.thetastar,
        mean=final.mean(axis=0),
        cov=cov,
        mse=float(np.mean(np.sum(err**2, axis=1))),
        bias_pred=sched.alpha(p.N + 1) * stats.beta_theta,
        trace_sigma_pr=float(np.trace(stats.sigma_PR)),
        mse_pred=float(mse_predict(stats, sched, p.N)),
        fingerprint=model_fingerprint(model),
        failed_runs=len(p.failed),
    )


@dataclass
class ComparisonRow:
    a: float | None
    rho: float
    bias_emp: np.ndarray
    bias_pred: np.ndarray
    bias_se: np.ndarray
    var_emp: float          # N trace(cov)
    var_theory: float       # trace(Sigma_PR)
    var_se: float
    mse: float
    mse_pred: float

    @property
    def bias_ratio_components(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.bias_pred != 0, self.bias_emp / self.bias_pred, np.nan)

    @property
    def bias_ratio(self) -> float:
        p = np.linalg.norm(self.bias_pred)
        return float(np.linalg.norm(self.bias_emp) / p) if p > 0 else float("nan")

    @property
    def var_ratio(self) -> float:
        return self.var_emp / self.var_theory if self.var_theory > 0 else float("nan")

    @property
    def mse_ratio(self) -> float:
        return self.mse / self.mse_pred if self.mse_pred > 0 else float("nan")

    def as_dict(self) -> dict:
        d = {"a": self.a, "rho": self.rho}
        for i, (e, p, s, r) in enumerate(
            zip(self.bias_emp, self.bias_pred, self.bias_se, self.bias_ratio_components), start=1
        ):
            d.update({f"bias_emp_{i}": e, f"bias_pred_{i}": p, f"bias_se_{i}": s, f"bias_ratio_{i}": r})
        d.update(
            bias_ratio=self.bias_ratio,
            var_emp=self.var_emp,
            var_theory=self.var_theory,
            var_se=self.var_se,
            var_ratio=self.var_ratio,
            mse=self.mse,
            mse_pred=self.mse_pred,
            mse_ratio=self.mse_ratio,
        )
        return {k: float(v) if v is not None else None for k, v in d.items()}


def compare_theory(summary: EnsembleSummary, model: LinearSAModel, schedule: StepSizeSchedule) -> ComparisonRow:
    """One comparison row. Standard errors: mean ``sqrt(diag cov / M)``;
    variance ``sqrt(2 / (M - 1))`` times the estimate."""
    if summary.fingerprint != model_fingerprint(model) or summary.rho != schedule.rho or summary.alpha0 != schedule.alpha0:
        raise ModelMismatch("summary was computed for a different model or schedule")
    stats = theory_stats(model, schedule)
    var_emp = summary.trace_cov_times_N
    return ComparisonRow(
        a=summary.a,
        rho=schedule.rho,
        bias_emp=summary.bias,
        bias_pred=schedule.alpha(summary.N + 1) * stats.beta_theta,
        bias_se=np.sqrt(np.diag(summary.cov) / summary.M),
        var_emp=var_emp,
        var_theory=float(np.trace(stats.sigma_PR)),
        var_se=float(np.sqrt(2.0 / (summary.M - 1)) * var_emp),
        mse=summary.mse,
        mse_pred=summary.mse_pred,
    )


def compare_all(result: EnsembleResult) -> list:
    return [compare_theory(summarize(p), p.model, p.schedule) for p in result.points]


def curves(p: GridResult, bound_params=None) -> dict:
    """MSE along the run at the checkpoints (n >= 1)."""
    stats = theory_stats(p.model, p.schedule)
    sel = p.ns >= 1
    ns = p.ns[sel]
    err_raw = p.thetas[:, sel] - p.model.thetastar
    err_pr = p.prs[:, sel] - p.model.thetastar
    if bound_params is None and p.a is not None and 0 < abs(2 * p.a - 1) < 1 and p.label.startswith("section3"):
        bound_params = section3_bound_params(p.a, p.schedule.alpha0)
    ftb = finite_time_bound(bound_params, p.schedule, ns) if bound_params is not None else np.full(ns.size, np.nan)
    return {
        "n": ns,
        "mse_raw": np.mean(np.sum(err_raw**2, axis=2), axis=0),
        "mse_pr": np.mean(np.sum(err_pr**2, axis=2), axis=0),
        "mse_pr_pred": mse_predict(stats, p.schedule, ns),
        "finite_time_bound": ftb,
    }


def _fit_slope(x, y, se_log):
    """OLS slope of y on x with a delta-method standard error from per-point SEs of y."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xc = x - x.mean()
    w = xc / (xc @ xc)
    slope = float(w @ y)
    return slope, float(np.sqrt(np.sum(w**2 * np.asarray(se_log, float) ** 2)))


def fit_rates(p: GridResult, fit_ns=None, raw_range=(1_000, None)) -> dict:
    """Log-log slopes: averaged bias vs alpha_{n+1}, raw MSE vs alpha_n, n trace(cov) vs n.

    Bands are two delta-method standard errors.
    """
    N = p.N
    if fit_ns is None:
        fit_ns = (N // 10, N // 3, N)
    fit_ns = [n for n in fit_ns if n > p.N0 and n in set(p.ns.tolist())]
    lo, hi = raw_range
    hi = N if hi is None else hi
    raw_idx = np.where((p.ns >= lo) & (p.ns <= hi))[0]
    if len(fit_ns) < 3 or raw_idx.size < 3:
        raise InsufficientGrid("need at least three checkpoints for each fit")
    pos = {n: i for i, n in enumerate(p.ns.tolist())}
    ts = p.model.thetastar
    M = p.M
    sched = p.schedule

    bias, bias_se, vn, vn_se = [], [], [], []
    for n in fit_ns:
        x = p.prs[:, pos[n]]
        m = x.mean(axis=0) - ts
        C = np.cov(x, rowvar=False, ddof=1)
        nm = np.linalg.norm(m)
        bias.append(nm)
        bias_se.append(np.sqrt(m @ C @ m / M) / nm / nm)
        vn.append(n * np.trace(C))
        vn_se.append(np.sqrt(2.0 / (M - 1)))
    alpha_next = sched.alpha0 * (np.array(fit_ns, float) + 1.0) ** -sched.rho
    sb, sb_se = _fit_slope(np.log(alpha_next), np.log(bias), bias_se)
    sc, sc_se = _fit_slope(np.log(fit_ns), np.log(vn), vn_se)

    sq = np.sum((p.thetas[:, raw_idx] - ts) ** 2, axis=2)
    mse = sq.mean(axis=0)
    mse_se = sq.std(axis=0, ddof=1) / np.sqrt(M) / mse
    alpha_n = sched.alpha0 * p.ns[raw_idx].astype(float) ** -sched.rho
    sr, sr_se = _fit_slope(np.log(alpha_n), np.log(mse), mse_se)

    def entry(slope, se, expect):
        return {"slope": slope, "expected": expect, "band": [slope - 2 * se, slope + 2 * se]}

    return {
        "a": p.a,
        "rho": sched.rho,
        "fit_ns": list(map(int, fit_ns)),
        "raw_ns": [int(p.ns[raw_idx[0]]), int(p.ns[raw_idx[-1]])],
        "bias_vs_alpha": entry(sb, sb_se, 1.0),
        "raw_mse_vs_alpha": entry(sr, sr_se, 1.0),
        "n_trace_cov_vs_n": entry(sc, sc_se, 0.0),
    }


def rate_checks(config: ExperimentConfig, threads: int = 1, result: EnsembleResult | None = None) -> list:
    if result is None:
        result = run_ensemble(config, threads)
    return [fit_rates(p) for p in result.points]

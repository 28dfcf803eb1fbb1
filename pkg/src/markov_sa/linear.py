"""Linear SA models over finite chains and their exact asymptotic statistics.

The model is ``f(theta, x) = A(x) theta - b(x)`` with mean field
``fbar(theta) = A* theta - bbar``, where ``A*`` and ``bbar`` are the
stationary means. All predictions here are exact finite sums over states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotHurwitz, SingularAstar
from .markov import (
    FiniteMarkovChain,
    clt_covariance,
    martingale_covariance,
    poisson_solve_matrix,
    poisson_solve_vector,
    two_state,
)
from .stepsize import StepSizeSchedule

HURWITZ_TOL = 1e-9

# Two-state experiment matrices; state 0 selects (A0, b0), state 1 (A1, b1).
SECTION3_A0 = 2.0 * np.array([[-2.0, 0.0], [1.0, -2.0]])
SECTION3_A1 = 2.0 * np.array([[1.0, 0.0], [-1.0, 1.0]])
SECTION3_B0 = np.zeros(2)
SECTION3_B1 = -2.0 * np.ones(2)


@dataclass(frozen=True, eq=False)
class LinearSAModel:
    chain: FiniteMarkovChain
    A: np.ndarray
    b: np.ndarray
    Astar: np.ndarray
    bbar: np.ndarray
    thetastar: np.ndarray
    G: np.ndarray  # inverse of Astar

    @property
    def dim(self) -> int:
        return self.b.shape[1]

    def forcing_at_optimum(self) -> np.ndarray:
        """``g(x) = A(x) theta* - b(x)`` for every state, shape (n, d)."""
        return self.A @ self.thetastar - self.b

    def mean_field(self, theta) -> np.ndarray:
        return self.Astar @ np.asarray(theta, dtype=float) - self.bbar


def make_linear_model(chain: FiniteMarkovChain, A, b) -> LinearSAModel:
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = chain.n_states
    if A.ndim != 3 or A.shape[0] != n or A.shape[1] != A.shape[2]:
        raise DomainError(f"A table must have shape ({n}, d, d), got {A.shape}")
    if b.shape != (n, A.shape[1]):
        raise DomainError(f"b table must have shape ({n}, {A.shape[1]}), got {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise DomainError("model tables must be finite")
    Astar = chain.expect(A)
    bbar = chain.expect(b)
    if np.linalg.cond(Astar) > 1e12:
        raise SingularAstar("mean matrix A* is singular")
    ev = np.linalg.eigvals(Astar)
    if np.max(ev.real) >= -HURWITZ_TOL:
        raise NotHurwitz(f"A* is not Hurwitz; spectral abscissa {np.max(ev.real):.3g}")
    thetastar = np.linalg.solve(Astar, bbar)
    for arr in (A, b, Astar, bbar, thetastar):
        arr.setflags(write=False)
    G = np.linalg.inv(Astar)
    G.setflags(write=False)
    return LinearSAModel(chain, A, b, Astar, bbar, thetastar, G)


def section3_model(a: float, additive: bool = False) -> LinearSAModel:
    """The two-state example; ``additive=True`` replaces A(x) by its mean ``-I``."""
    chain = two_state(a)
    A = np.stack([SECTION3_A0, SECTION3_A1])
    if additive:
        A = np.stack([0.5 * (SECTION3_A0 + SECTION3_A1)] * 2)
    return make_linear_model(chain, A, np.stack([SECTION3_B0, SECTION3_B1]))


class LinearUpdate:
    """``(theta, x) -> A(x) theta - b(x)``, recognised by the compiled runner."""

    def __init__(self, A, b):
        self.A = A
        self.b = b

    @property
    def affine_tables(self):
        return self.A, self.b

    def __call__(self, theta, x):
        return self.A[x] @ theta - self.b[x]


def update_fn(model: LinearSAModel) -> LinearUpdate:
    return LinearUpdate(model.A, model.b)


def theory_upsilon_star(model: LinearSAModel) -> np.ndarray:
    """Stationary mean of ``-A_hat(Phi_{k+2}) (A(Phi_{k+1}) theta* - b(Phi_{k+1}))``."""
    chain = model.chain
    A_hat = poisson_solve_matrix(chain, model.A)
    PA_hat = chain.cond_expect(A_hat)  # PA_hat[x] = sum_y P(x,y) A_hat(y)
    g = model.forcing_at_optimum()
    terms = np.einsum("xij,xj->xi", PA_hat, g)
    return -chain.expect(terms)


def theory_beta(model: LinearSAModel, schedule: StepSizeSchedule) -> np.ndarray:
    return model.G @ theory_upsilon_star(model) / (1.0 - schedule.rho)


def theory_sigma_pr(model: LinearSAModel):
    """Return ``(Sigma_W*, Sigma_PR, sigma_PR)``.

    ``Sigma_W*`` is the CLT covariance of ``f(theta*, Phi)``; the optimal
    averaged covariance is ``G Sigma_W* G^T``.
    """
    g = model.forcing_at_optimum()
    sw = clt_covariance(model.chain, g)
    mds = martingale_covariance(model.chain, g)
    scale = max(1.0, float(np.max(np.abs(sw))))
    if np.max(np.abs(sw - mds)) > 1e-10 * scale:
        raise ArithmeticError("CLT and martingale covariance forms disagree")
    spr = model.G @ sw @ model.G.T
    spr = 0.5 * (spr + spr.T)
    return sw, spr, math.sqrt(max(float(np.trace(spr)), 0.0))


@dataclass(frozen=True)
class TheoryStats:
    upsilon_bar_star: np.ndarray
    beta_theta: np.ndarray
    sigma_Wstar: np.ndarray
    sigma_PR: np.ndarray
    sigma_pr_scalar: float
    rho: float

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "upsilon_bar_star": self.upsilon_bar_star.tolist(),
            "beta_theta": self.beta_theta.tolist(),
            "sigma_Wstar": self.sigma_Wstar.tolist(),
            "sigma_PR": self.sigma_PR.tolist(),
            "trace_sigma_PR": float(np.trace(self.sigma_PR)),
            "sigma_pr_scalar": self.sigma_pr_scalar,
        }


def theory_stats(model: LinearSAModel, schedule: StepSizeSchedule) -> TheoryStats:
    ups = theory_upsilon_star(model)
    sw, spr, s = theory_sigma_pr(model)
    return TheoryStats(ups, model.G @ ups / (1.0 - schedule.rho), sw, spr, s, schedule.rho)


def bias_predict(model: LinearSAModel, schedule: StepSizeSchedule, n: int) -> np.ndarray:
    """Leading bias ``alpha_{n+1} beta_theta`` of the averaged estimate."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return schedule.alpha(n + 1) * theory_beta(model, schedule)


def mse_predict(stats: TheoryStats, schedule: StepSizeSchedule, n) -> np.ndarray:
    """``alpha_{n+1}^2 |beta|^2 + trace(Sigma_PR) / n``."""
    n = np.asarray(n, dtype=float)
    a = schedule.alpha0 * (n + 1.0) ** -schedule.rho
    return a**2 * float(stats.beta_theta @ stats.beta_theta) + float(np.trace(stats.sigma_PR)) / n


def two_state_closed_forms(a, A0, A1, b0, b1):
    """Closed-form ``(Upsilon_bar*, Sigma_PR)`` for the symmetric two-state model.

    Uses the scalar Poisson solution of ``g(x) = x`` and keeps ``b0`` and the
    ``G``-conjugation, so it covers any (A0, A1, b0, b1) with Hurwitz mean.
    """
    A0, A1 = np.asarray(A0, float), np.asarray(A1, float)
    b0, b1 = np.asarray(b0, float), np.asarray(b1, float)
    Astar = 0.5 * (A0 + A1)
    thetastar = np.linalg.solve(Astar, 0.5 * (b0 + b1))
    G = np.linalg.inv(Astar)
    v = A0 @ thetastar - b0
    ups = (2 * a - 1) / (4 * (1 - a)) * (A1 - A0) @ v
    Gv = G @ v
    return ups, a / (1 - a) * np.outer(Gv, Gv)


def ad_bias_envelope(schedule: StepSizeSchedule, n, n_b, C, lam):
    """``C exp(-lam (tau_b(n) - tau_b(n_b)))``."""
    n_arr = np.asarray(n, dtype=float)
    if C <= 0 or lam <= 0 or n_b < 1 or np.any(n_arr < n_b):
        raise DomainError("need n >= n_b >= 1 and C, lam > 0")
    out = C * np.exp(-lam * (schedule.tau_b(n_arr) - schedule.tau_b(n_b)))
    return float(out) if np.ndim(out) == 0 else out


def fit_ad_decay(schedule: StepSizeSchedule, ns, mean_errors):
    """Regress ``log |mean error|`` on ``tau_b(n)``; returns (slope, intercept, r2).

    A decaying envelope has negative slope; ``lam = -slope``.
    """
    x = schedule.tau_b(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(mean_errors, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - resid @ resid / np.sum((y - y.mean()) ** 2)
    return float(slope), float(intercept), float(r2)


@dataclass(frozen=True)
class FiniteTimeBoundParams:
    c0: float
    R: float
    varrho: float
    L_fbar: float
    sigma_W0: float
    alpha0: float
    theta_star_norm: float

    def __post_init__(self):
        if not 0.0 < self.varrho < 1.0:
            raise DomainError(f"varrho must lie in (0, 1), got {self.varrho}")
        if self.c0 <= 0 or self.R <= 0 or self.alpha0 <= 0:
            raise DomainError("c0, R and alpha0 must be positive")
        if self.L_fbar < 0 or self.sigma_W0 < 0 or self.theta_star_norm < 0:
            raise DomainError("L_fbar, sigma_W0 and theta_star_norm must be non-negative")

    @property
    def L(self) -> float:
        return 520.0 * (self.L_fbar + self.sigma_W0**2) ** 2 * self.alpha0 * (self.theta_star_norm + 1.0) ** 2

    @property
    def K(self) -> float:
        ratio = math.log(self.R / self.varrho) / math.log(1.0 / self.varrho)
        return self.L / self.c0 * max(1.0, ratio)


def section3_bound_params(a: float, alpha0: float) -> FiniteTimeBoundParams:
    """Constants of the universal MSE bound for the two-state example."""
    model = section3_model(a)
    return FiniteTimeBoundParams(
        c0=1.0,
        R=0.5,
        varrho=abs(2 * a - 1),
        L_fbar=float(np.linalg.norm(model.Astar, 2)),
        sigma_W0=0.0,
        alpha0=alpha0,
        theta_star_norm=float(np.linalg.norm(model.thetastar)),
    )


def finite_time_bound(params: FiniteTimeBoundParams, schedule: StepSizeSchedule, n):
    """Leading term ``K [log(n / alpha0) + 1] alpha_n``; the fast-vanishing remainder is dropped."""
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1):
        raise DomainError("n must be >= 1")
    out = params.K * (np.log(n_arr / params.alpha0) + 1.0) * schedule.alpha0 * n_arr ** -schedule.rho
    return float(out) if out.ndim == 0 else out

"""Pathwise noise decomposition for linear models.

For ``Delta_{k+1} = f(theta_k, Phi_{k+1}) - fbar(theta_k)`` and the Poisson
solution ``f_hat(theta, x) = A_hat(x) theta + b_hat(x)``::

    Delta_{k+1} = W_{k+2} - T_{k+2} + T_{k+1} - alpha_{k+1} Upsilon_{k+2}

with the martingale difference ``W_{k+2} = f_hat(theta_k, Phi_{k+2}) -
(P f_hat(theta_k))(Phi_{k+1})``, the telescoping term ``T_{k+1} =
f_hat(theta_k, Phi_{k+1})`` and ``Upsilon_{k+2} = -(f_hat(theta_{k+1},
Phi_{k+2}) - f_hat(theta_k, Phi_{k+2})) / alpha_{k+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import TrajectoryRecord
from .errors import MissingPath
from .linear import LinearSAModel, theory_sigma_pr, theory_upsilon_star
from .markov import poisson_solve_matrix, poisson_solve_vector
from .stepsize import StepSizeSchedule


def hat_f(model: LinearSAModel):
    """Zero-mean Poisson solutions ``(A_hat, b_hat)`` for the forcing ``A(x) theta - b(x)``."""
    return poisson_solve_matrix(model.chain, model.A), poisson_solve_vector(model.chain, -model.b)


def upsilon_linear(model: LinearSAModel, theta, x_prev: int, x_next: int, A_hat=None) -> np.ndarray:
    """``-A_hat(x_next) (A(x_prev) theta - b(x_prev))``."""
    if A_hat is None:
        A_hat = poisson_solve_matrix(model.chain, model.A)
    theta = np.asarray(theta, dtype=float)
    return -A_hat[x_next] @ (model.A[x_prev] @ theta - model.b[x_prev])


@dataclass(frozen=True)
class DecompositionTerms:
    """Per-step terms; row ``k`` pairs ``Delta_{k+1}`` with ``W_{k+2}`` etc."""

    theta: np.ndarray          # theta_k
    alpha: np.ndarray          # alpha_{k+1}
    delta: np.ndarray          # Delta_{k+1}
    W: np.ndarray              # W_{k+2}
    T: np.ndarray              # T_{k+1}
    T_next: np.ndarray         # T_{k+2}
    upsilon: np.ndarray        # Upsilon_{k+2}, finite-difference form
    upsilon_closed: np.ndarray # Upsilon_{k+2}, affine closed form
    Wstar: np.ndarray          # W*_{k+2}
    upsilon_star: np.ndarray   # Upsilon*_{k+2}
    prev_state: np.ndarray     # Phi_{k+1}

    @property
    def residual(self) -> np.ndarray:
        return self.delta - (self.W - self.T_next + self.T - self.alpha[:, None] * self.upsilon)

    def scaled_residual(self) -> np.ndarray:
        r = np.max(np.abs(self.residual), axis=1)
        return r / (1.0 + np.linalg.norm(self.theta, axis=1))


def decompose_path(model: LinearSAModel, schedule: StepSizeSchedule, traj: TrajectoryRecord) -> DecompositionTerms:
    if traj.path is None:
        raise MissingPath("trajectory was run without keep_path=True")
    N = len(traj.path) - 1
    if traj.indices.size != N + 1 or np.any(traj.indices != np.arange(N + 1)):
        raise MissingPath("decomposition needs unthinned iterates (record_stride=1)")
    path = np.asarray(traj.path)
    th = traj.thetas
    chain = model.chain
    A_hat, b_hat = hat_f(model)
    PA_hat = chain.cond_expect(A_hat)
    Pb_hat = chain.cond_expect(b_hat)

    def fh(theta, x):
        return np.einsum("kij,kj->ki", A_hat[x], theta) + b_hat[x]

    theta_k, theta_k1 = th[:-2], th[1:-1]
    x1, x2 = path[1:-1], path[2:]
    alpha = schedule.alphas(N - 1)
    f_k = np.einsum("kij,kj->ki", model.A[x1], theta_k) - model.b[x1]
    delta = f_k - (theta_k @ model.Astar.T - model.bbar)
    cond = np.einsum("kij,kj->ki", PA_hat[x1], theta_k) + Pb_hat[x1]
    W = fh(theta_k, x2) - cond
    T = fh(theta_k, x1)
    T_next = fh(theta_k1, x2)
    upsilon = -(T_next - fh(theta_k, x2)) / alpha[:, None]
    upsilon_closed = -np.einsum("kij,kj->ki", A_hat[x2], f_k)

    ts = model.thetastar
    f_star = model.A @ ts - model.b
    fh_star = A_hat @ ts + b_hat
    Wstar = fh_star[x2] - chain.cond_expect(fh_star)[x1]
    upsilon_star = -np.einsum("kij,kj->ki", A_hat[x2], f_star[x1])
    return DecompositionTerms(theta_k, alpha, delta, W, T, T_next, upsilon, upsilon_closed, Wstar, upsilon_star, x1)


def batch_means_se(samples, n_batches: int | None = None) -> np.ndarray:
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n_batches is None:
        n_batches = max(2, int(np.sqrt(n)))
    size = n // n_batches
    means = x[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def decomposition_report(model: LinearSAModel, terms: DecompositionTerms) -> dict:
    """Residual and sanity statistics in JSON-ready form."""
    scaled = terms.scaled_residual()
    fd_gap = np.max(np.abs(terms.upsilon - terms.upsilon_closed), axis=1)
    ups_mean = terms.upsilon_star.mean(axis=0)
    ups_se = batch_means_se(terms.upsilon_star)
    sigma_w, _, _ = theory_sigma_pr(model)
    cond = {}
    for y in range(model.chain.n_states):
        sel = terms.Wstar[terms.prev_state == y]
        if len(sel) > 1:
            cond[str(y)] = {
                "count": int(len(sel)),
                "mean": sel.mean(axis=0).tolist(),
                "se": (sel.std(axis=0, ddof=1) / np.sqrt(len(sel))).tolist(),
            }
    return {
        "steps": int(len(scaled)),
        "max_scaled_residual": float(scaled.max()),
        "mean_scaled_residual": float(scaled.mean()),
        "max_upsilon_fd_gap": float(fd_gap.max()),
        "upsilon_star_mean": ups_mean.tolist(),
        "upsilon_star_se": ups_se.tolist(),
        "upsilon_star_theory": theory_upsilon_star(model).tolist(),
        "W_quadratic_variation": float(np.mean(np.sum(terms.W**2, axis=1))),
        "trace_sigma_Wstar": float(np.trace(sigma_w)),
        "Wstar_conditional_means": cond,
    }

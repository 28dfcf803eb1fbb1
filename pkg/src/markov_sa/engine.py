"""The stochastic-approximation recursion with Polyak-Ruppert averaging.

Index convention: the step taken from ``theta_n`` to ``theta_{n+1}`` uses
``alpha_{n+1}`` and the fresh noise state ``Phi_{n+1}``::

    theta_{n+1} = theta_n + alpha_{n+1} * f(theta_n, Phi_{n+1})

The averaged iterate over the window ``[N0, n]`` (inclusive) is
``theta_pr_n = sum_{k=N0}^{n} theta_k / (n - N0 + 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional

import numba
import numpy as np

from .errors import BurnInNotReached, DomainError, NumericalDivergence
from .markov import FiniteMarkovChain, sample_path
from .stepsize import StepSizeSchedule


@dataclass(frozen=True)
class SARunConfig:
    schedule: StepSizeSchedule
    n_steps: int
    burn_in: int
    theta0: np.ndarray
    chain: FiniteMarkovChain
    seed: int = 0
    record_stride: int = 1
    init: object = "stationary"
    keep_path: bool = False

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_steps:
            raise DomainError(f"need 0 <= burn_in < n_steps, got {self.burn_in}, {self.n_steps}")
        if self.record_stride < 1:
            raise DomainError("record_stride must be >= 1")
        object.__setattr__(self, "theta0", np.array(self.theta0, dtype=float).reshape(-1))

    def record_indices(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.record_stride, dtype=np.int64)
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return idx


@dataclass(frozen=True)
class TrajectoryRecord:
    indices: np.ndarray       # recorded n
    thetas: np.ndarray        # theta_n at ``indices``, shape (len(indices), d)
    pr: np.ndarray            # theta_pr_n at ``indices``; NaN rows where n < burn_in
    theta_final: np.ndarray
    pr_final: np.ndarray
    burn_in: int
    path: Optional[np.ndarray] = None

    @property
    def pr_indices(self) -> np.ndarray:
        return self.indices[self.indices >= self.burn_in]


class PolyakRuppert:
    """Streaming mean of iterates from the burn-in index onward.

    The running sum uses compensated summation so long windows keep the mean
    accurate to a few ulps.
    """

    def __init__(self, burn_in: int, dim: int):
        self.burn_in = burn_in
        self.n = -1
        self.count = 0
        self._sum = np.zeros(dim)
        self._comp = np.zeros(dim)

    def update(self, theta) -> None:
        self.n += 1
        if self.n < self.burn_in:
            return
        y = np.asarray(theta, dtype=float) - self._comp
        t = self._sum + y
        self._comp = (t - self._sum) - y
        self._sum = t
        self.count += 1

    @property
    def mean(self) -> np.ndarray:
        if self.count == 0:
            raise BurnInNotReached(f"index {self.n} has not reached burn-in {self.burn_in}")
        return self._sum / self.count


def pr_average(iterates: Iterable, burn_in: int) -> Iterator[np.ndarray]:
    """Yield ``theta_pr_n`` for every ``n >= burn_in`` of an iterate stream."""
    acc = None
    for theta in iterates:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if acc is None:
            acc = PolyakRuppert(burn_in, theta.size)
        acc.update(theta)
        if acc.count:
            yield acc.mean


@numba.njit(cache=True, nogil=True)
def _affine_kernel(A, b, path, alphas, theta0, burn_in, record):
    d = theta0.shape[0]
    n_steps = path.shape[0] - 1
    n_rec = record.shape[0]
    thetas = np.full((n_rec, d), np.nan)
    prs = np.full((n_rec, d), np.nan)
    theta = theta0.copy()
    new = np.empty(d)
    s = np.zeros(d)
    c = np.zeros(d)
    count = 0
    ri = 0
    for n in range(n_steps + 1):
        if n >= burn_in:
            for i in range(d):
                y = theta[i] - c[i]
                t = s[i] + y
                c[i] = (t - s[i]) - y
                s[i] = t
            count += 1
        while ri < n_rec and record[ri] == n:
            for i in range(d):
                thetas[ri, i] = theta[i]
                if count > 0:
                    prs[ri, i] = s[i] / count
            ri += 1
        if n == n_steps:
            break
        x = path[n + 1]
        a = alphas[n]
        bad = False
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += A[x, i, j] * theta[j]
            v = theta[i] + a * (acc - b[x, i])
            if not np.isfinite(v):
                bad = True
            new[i] = v
        if bad:
            return thetas, prs, theta, s / max(count, 1), n + 1
        for i in range(d):
            theta[i] = new[i]
    return thetas, prs, theta, s / count, -1


def simulate_affine(A, b, path, alphas, theta0, burn_in, record):
    """Run the affine recursion ``f(theta, x) = A[x] theta - b[x]`` along a fixed path.

    ``alphas[k]`` is ``alpha_{k+1}``. Returns ``(thetas, prs, theta_final,
    pr_final)`` with rows aligned to ``record``.
    """
    thetas, prs, final, pr_final, bad = _affine_kernel(
        np.ascontiguousarray(A, dtype=float),
        np.ascontiguousarray(b, dtype=float),
        np.ascontiguousarray(path, dtype=np.int64),
        np.ascontiguousarray(alphas, dtype=float),
        np.ascontiguousarray(theta0, dtype=float),
        int(burn_in),
        np.ascontiguousarray(record, dtype=np.int64),
    )
    if bad >= 0:
        raise NumericalDivergence(int(bad))
    return thetas, prs, final, pr_final


def _run_generic(update, config, path, alphas, record):
    theta = config.theta0.copy()
    d = theta.size
    thetas = np.full((record.size, d), np.nan)
    prs = np.full((record.size, d), np.nan)
    acc = PolyakRuppert(config.burn_in, d)
    ri = 0
    N = config.n_steps
    for n in range(N + 1):
        acc.update(theta)
        while ri < record.size and record[ri] == n:
            thetas[ri] = theta
            if acc.count:
                prs[ri] = acc.mean
            ri += 1
        if n == N:
            break
        theta = theta + alphas[n] * np.asarray(update(theta, int(path[n + 1])), dtype=float)
        if not np.all(np.isfinite(theta)):
            raise NumericalDivergence(n + 1)
    return thetas, prs, theta, acc.mean


def run_sa(
    update: Callable,
    config: SARunConfig,
    *,
    path: Optional[np.ndarray] = None,
    fast: bool = True,
) -> TrajectoryRecord:
    """Simulate one trajectory of the recursion.

    ``update(theta, x)`` returns the increment direction for state ``x``.
    Updates exposing ``affine_tables`` (see ``linear.LinearUpdate``) run in
    a compiled loop unless ``fast=False``. A precomputed ``path`` of length
    ``n_steps + 1`` overrides sampling from ``config.seed``.
    """
    N = config.n_steps
    if path is None:
        path = sample_path(config.chain, N, config.seed, config.init)
    elif len(path) != N + 1:
        raise DomainError(f"path must have {N + 1} states, got {len(path)}")
    alphas = config.schedule.alphas(N)
    record = config.record_indices()
    tables = getattr(update, "affine_tables", None)
    if fast and tables is not None:
        thetas, prs, final, pr_final = simulate_affine(*tables, path, alphas, config.theta0, config.burn_in, record)
    else:
        thetas, prs, final, pr_final = _run_generic(update, config, path, alphas, record)
    return TrajectoryRecord(
        indices=record,
        thetas=thetas,
        pr=prs,
        theta_final=final,
        pr_final=pr_final,
        burn_in=config.burn_in,
        path=np.asarray(path) if config.keep_path else None,
    )


def noise_free_euler(mean_field: Callable, schedule: StepSizeSchedule, x0, n_steps: int) -> np.ndarray:
    """Euler scheme ``x_{n+1} = x_n + alpha_{n+1} fbar(x_n)``; returns ``x_0..x_N``."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    x = np.array(x0, dtype=float).reshape(-1)
    out = np.empty((n_steps + 1, x.size))
    out[0] = x
    alphas = schedule.alphas(n_steps)
    for n in range(n_steps):
        x = x + alphas[n] * np.asarray(mean_field(x), dtype=float)
        if not np.all(np.isfinite(x)):
            raise NumericalDivergence(n + 1)
        out[n + 1] = x
    return out

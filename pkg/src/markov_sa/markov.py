"""Finite-state Markov chains used as the noise source of the recursion.

Per-state tables are plain numpy arrays indexed by state along axis 0:
shape ``(n,)`` or ``(n, d)`` for vector-valued functions and ``(n, d, d)``
for matrix-valued ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import DegenerateChain, DomainError, NonStochastic, ReducibleOrDegenerate

ROW_TOL = 1e-9
_COND_MAX = 1e12


@dataclass(frozen=True, eq=False)
class FiniteMarkovChain:
    """Row-stochastic chain with its stationary law and fundamental matrix.

    Build with :func:`make_chain`; the constructor trusts its inputs.
    """

    P: np.ndarray
    pi: np.ndarray
    Z: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.P, axis=1)
        c[:, -1] = 1.0
        return c

    def expect(self, g) -> np.ndarray:
        """Stationary mean ``pi(g)`` of a per-state table."""
        return np.tensordot(self.pi, np.asarray(g, dtype=float), axes=(0, 0))

    def cond_expect(self, g) -> np.ndarray:
        """``(Pg)(x) = E[g(Phi_{k+1}) | Phi_k = x]`` for every x."""
        return np.tensordot(self.P, np.asarray(g, dtype=float), axes=(1, 0))

    def second_eigenvalue_modulus(self) -> float:
        ev = np.sort(np.abs(np.linalg.eigvals(self.P)))[::-1]
        return float(ev[1]) if ev.size > 1 else 0.0


def _freeze(a):
    a.setflags(write=False)
    return a


def make_chain(P) -> FiniteMarkovChain:
    P = np.array(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise NonStochastic(f"transition matrix must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise NonStochastic("transition matrix has non-finite entries")
    if P.min() < -ROW_TOL or P.max() > 1 + ROW_TOL:
        raise NonStochastic("transition probabilities must lie in [0, 1]")
    rows = P.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > ROW_TOL:
        raise NonStochastic(f"row sums deviate from 1 by {np.max(np.abs(rows - 1.0)):.3g}")
    P = np.clip(P, 0.0, 1.0)
    P = P / P.sum(axis=1, keepdims=True)

    n = P.shape[0]
    I = np.eye(n)
    # pi^T (I - P + J/n) = 1^T / n
    M = (I - P + np.full((n, n), 1.0 / n)).T
    if np.linalg.cond(M) > _COND_MAX:
        raise ReducibleOrDegenerate("stationary distribution is not unique")
    pi = np.linalg.solve(M, np.full(n, 1.0 / n))
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()

    F = I - P + np.outer(np.ones(n), pi)
    if np.linalg.cond(F) > _COND_MAX:
        raise ReducibleOrDegenerate("I - P + 1 pi^T is singular")
    Z = np.linalg.inv(F)
    return FiniteMarkovChain(_freeze(P), _freeze(pi), _freeze(Z))


def two_state(a: float) -> FiniteMarkovChain:
    """Symmetric two-state chain that stays put with probability ``a``."""
    if not 0.0 < a < 1.0:
        raise DomainError(f"a must lie in (0, 1), got {a}")
    return make_chain([[a, 1.0 - a], [1.0 - a, a]])


@numba.njit(cache=True, nogil=True)
def _walk(cdf, start, u):
    n = u.shape[0]
    out = np.empty(n + 1, dtype=np.int64)
    out[0] = start
    k = cdf.shape[1]
    s = start
    for t in range(n):
        x = u[t]
        j = 0
        while j < k - 1 and x >= cdf[s, j]:
            j += 1
        s = j
        out[t + 1] = s
    return out


def sample_path(chain: FiniteMarkovChain, n_steps: int, seed, init="stationary") -> np.ndarray:
    """Draw ``Phi_0, ..., Phi_{n_steps}`` by inverse-CDF sampling.

    ``seed`` is an integer or a ``numpy.random.Generator`` (consumed in place).
    ``init`` is ``"stationary"`` or a fixed starting state.
    """
    if n_steps < 0:
        raise DomainError("n_steps must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(init, str):
        if init != "stationary":
            raise DomainError(f"unknown init {init!r}")
        c = np.cumsum(chain.pi)
        start = int(min(np.searchsorted(c, rng.random(), side="right"), chain.n_states - 1))
    else:
        start = int(init)
        if not 0 <= start < chain.n_states:
            raise DomainError(f"initial state {start} out of range")
    return _walk(chain.cdf, start, rng.random(n_steps))


def _as_table(chain, g, min_ndim):
    g = np.asarray(g, dtype=float)
    if g.ndim < min_ndim or g.shape[0] != chain.n_states:
        raise DomainError(f"table must have leading dimension {chain.n_states}, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise DomainError("table has non-finite entries")
    return g


def poisson_solve_vector(chain: FiniteMarkovChain, g) -> np.ndarray:
    """Zero-mean solution of Poisson's equation ``P g_hat = g_hat - g + pi(g)``."""
    g = _as_table(chain, g, 1)
    if not np.all(np.isfinite(chain.Z)):
        raise DegenerateChain("fundamental matrix unavailable")
    cols = g.reshape(chain.n_states, -1)
    out = np.empty_like(cols)
    # column by column so matrix and vector forcings round identically
    for j in range(cols.shape[1]):
        c = cols[:, j]
        out[:, j] = chain.Z @ (c - chain.pi @ c)
    return out.reshape(g.shape)


def poisson_solve_matrix(chain: FiniteMarkovChain, M) -> np.ndarray:
    """Entrywise Poisson solution for a matrix-valued forcing table."""
    return poisson_solve_vector(chain, _as_table(chain, M, 3))


def _vec2(chain, g):
    g = _as_table(chain, g, 1)
    return g.reshape(chain.n_states, -1)


def clt_covariance(chain: FiniteMarkovChain, g) -> np.ndarray:
    """Asymptotic covariance of ``n^{-1/2} sum_k g~(Phi_k)`` under stationarity."""
    g = _vec2(chain, g)
    gt = g - chain.expect(g)
    gh = poisson_solve_vector(chain, g)
    w = chain.pi[:, None]
    S = (w * gh).T @ gt
    S = S + S.T - (w * gt).T @ gt
    return 0.5 * (S + S.T)


def martingale_covariance(chain: FiniteMarkovChain, g) -> np.ndarray:
    """``E_pi[g_hat g_hat^T] - E_pi[(P g_hat)(P g_hat)^T]``.

    Covariance of the martingale increments ``g_hat(Phi_{k+1}) - (P g_hat)(Phi_k)``;
    equal to :func:`clt_covariance` for the same forcing.
    """
    g = _vec2(chain, g)
    gh = poisson_solve_vector(chain, g)
    pgh = chain.cond_expect(gh)
    w = chain.pi[:, None]
    S = (w * gh).T @ gh - (w * pgh).T @ pgh
    return 0.5 * (S + S.T)

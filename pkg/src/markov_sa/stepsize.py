"""Power-law step-size schedules ``alpha_n = alpha0 * n**-rho``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

_BLOCK = 1 << 16


@dataclass(frozen=True)
class StepSizeSchedule:
    alpha0: float
    rho: float
    _checkpoints: list = field(default_factory=lambda: [0.0], init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.alpha0) and self.alpha0 > 0):
            raise DomainError(f"alpha0 must be positive, got {self.alpha0}")
        if not 0.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie in (0, 1), got {self.rho}")

    def alpha(self, n: int) -> float:
        if n < 1:
            raise DomainError(f"step index must be >= 1, got {n}")
        return self.alpha0 * float(n) ** -self.rho

    def alphas(self, n_max: int, start: int = 1) -> np.ndarray:
        """Vector ``[alpha_start, ..., alpha_{n_max}]``."""
        if start < 1:
            raise DomainError("step index must be >= 1")
        k = np.arange(start, n_max + 1, dtype=float)
        return self.alpha0 * k ** -self.rho

    def tau(self, n: int) -> float:
        """Exact partial sum ``alpha_1 + ... + alpha_n``."""
        if n < 0:
            raise DomainError("n must be non-negative")
        cps = self._checkpoints
        j = n // _BLOCK
        while len(cps) <= j:
            m = len(cps) - 1
            cps.append(cps[m] + float(np.sum(self.alphas((m + 1) * _BLOCK, m * _BLOCK + 1))))
        tail = n - j * _BLOCK
        if tail == 0:
            return cps[j]
        return cps[j] + float(np.sum(self.alphas(n, j * _BLOCK + 1)))

    def tau_b(self, n) -> float:
        """Integral upper bound ``alpha0 (1 + (n^{1-rho} - 1) / (1 - rho))`` on ``tau(n)``."""
        n_arr = np.asarray(n, dtype=float)
        if np.any(n_arr < 1):
            raise DomainError("n must be >= 1")
        r = 1.0 - self.rho
        out = self.alpha0 * (1.0 + (n_arr ** r - 1.0) / r)
        return float(out) if out.ndim == 0 else out

    def tau_asymptotic(self, n) -> float:
        return self.alpha0 * np.asarray(n, dtype=float) ** (1.0 - self.rho) / (1.0 - self.rho)

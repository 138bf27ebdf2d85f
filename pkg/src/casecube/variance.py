"""Sandwich variance for weighted Cox estimates under balanced designs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cox import CoxFit
from .errors import ConfigurationError, DataError, RankDeficiencyError


@dataclass(frozen=True, eq=False)
class VarianceResult:
    total: np.ndarray
    phase1: np.ndarray
    phase2: np.ndarray

    @property
    def se_total(self) -> np.ndarray:
        return _root_diag(self.total)

    @property
    def se1(self) -> np.ndarray:
        return _root_diag(self.phase1)

    @property
    def se2(self) -> np.ndarray:
        return _root_diag(self.phase2)


def _root_diag(m):
    return np.sqrt(np.clip(np.diag(m), 0.0, None))


def c_constant(n: int, p: int, pi_i):
    """Finite-population factor ``n / (n - p) * (1 - pi_i)``."""
    if n <= p:
        raise ConfigurationError(f"need n > p, got n={n}, p={p}")
    if p < 0:
        raise ConfigurationError("p must be nonnegative")
    return n / (n - p) * (1.0 - np.asarray(pi_i, dtype=float))


def phase2_component(pi, x, y, p: int | None = None, n: int | None = None) -> np.ndarray:
    """Residual-based variance of the HT total of ``y`` under balancing on ``x``.

    Parameters
    ----------
    pi : (n,) inclusion probabilities of the sampled units
    x : (n, p) balancing variables of the sampled units
    y : (n, k) responses (score residuals)
    p : number of balancing variables; defaults to ``x.shape[1]``
    n : sample size entering the ``c_i`` factor; defaults to ``len(pi)``

    Returns
    -------
    (k, k) matrix ``sum_i c_i e_i e_i' / pi_i**2`` where ``e_i`` are the
    residuals of the ``c``-weighted regression of ``y_i/pi_i`` on ``x_i/pi_i``.
    """
    pi = np.asarray(pi, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(pi.shape[0], -1)
    y = np.asarray(y, dtype=float).reshape(pi.shape[0], -1)
    if np.any(pi <= 0) or np.any(pi > 1):
        raise DataError("sampled units need inclusion probabilities in (0, 1]")
    p = x.shape[1] if p is None else p
    n = pi.shape[0] if n is None else n
    c = c_constant(n, p, pi)
    k = y.shape[1]
    if not np.any(c > 0):
        return np.zeros((k, k))
    xs = x / pi[:, None]
    ys = y / pi[:, None]
    gram = (xs * c[:, None]).T @ xs
    scale = np.abs(gram).max()
    if scale == 0 or np.linalg.matrix_rank(gram, tol=1e-12 * scale) < gram.shape[0]:
        raise RankDeficiencyError("balancing regression is singular")
    coef = np.linalg.solve(gram, (xs * c[:, None]).T @ ys)
    e = ys - xs @ coef
    v = (e * c[:, None]).T @ e
    return 0.5 * (v + v.T)


def sandwich(fit: CoxFit, v) -> VarianceResult:
    """Assemble ``I^{-1} + I^{-1} V I^{-1}`` from a fit and a phase-2 matrix."""
    inv = fit.information_inverse()
    v = np.asarray(v, dtype=float)
    phase2 = inv @ v @ inv
    phase2 = 0.5 * (phase2 + phase2.T)
    return VarianceResult(inv + phase2, inv, phase2)

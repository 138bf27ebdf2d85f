"""Weighted Cox partial likelihood with Breslow ties.

All sums over risk sets are taken with the design weights ``w_i``, so a
census fit is the special case ``w = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateDesignError, NumericError, StateError


@dataclass(frozen=True, eq=False)
class SurvData:
    times: np.ndarray
    events: np.ndarray
    covariates: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        n = times.shape[0]
        events = np.asarray(self.events).reshape(-1).astype(bool)
        z = np.asarray(self.covariates, dtype=float)
        if z.ndim == 1 and z.shape[0] == n:
            z = z.reshape(n, 1)
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float).reshape(-1)
        if events.shape[0] != n or z.ndim != 2 or z.shape[0] != n or w.shape[0] != n:
            raise DataError("times, events, covariates and weights must have the same length")
        if not np.all(np.isfinite(z)) or not np.all(np.isfinite(times)):
            raise NumericError("non-finite times or covariates")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DataError("weights must be finite and nonnegative")
        if not np.any(events & (w > 0)):
            raise DataError("need at least one event with positive weight")
        for name, arr in (("times", times), ("events", events), ("covariates", z), ("weights", w)):
            arr = np.array(arr, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def k(self) -> int:
        return self.covariates.shape[1]

    def subset(self, mask) -> "SurvData":
        return SurvData(self.times[mask], self.events[mask], self.covariates[mask], self.weights[mask])

    def reweighted(self, weights) -> "SurvData":
        return SurvData(self.times, self.events, self.covariates, weights)


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 50
    tol: float = 1e-9
    max_halvings: int = 40
    separation_bound: float = 15.0


@dataclass(frozen=True, eq=False)
class CoxFit:
    beta_hat: np.ndarray
    score_at_solution: np.ndarray
    information: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    separation_flag: bool = False
    loglik_trace: tuple[float, ...] = field(default=(), repr=False)

    @property
    def k(self) -> int:
        return self.beta_hat.shape[0]

    def information_inverse(self) -> np.ndarray:
        return _inverse(self.information)


@dataclass(frozen=True, eq=False)
class InfluenceSet:
    score_residuals: np.ndarray
    delta_betas: np.ndarray


class _RiskSets:
    """Sorted layout shared by all evaluations on one data set."""

    def __init__(self, data: SurvData):
        order = np.argsort(data.times, kind="stable")
        t = data.times[order]
        self.order = order
        self.first = np.searchsorted(t, t, side="left")
        self.last = np.searchsorted(t, t, side="right") - 1
        self.z = data.covariates[order]
        self.w = data.weights[order]
        self.d = np.where(data.events[order], self.w, 0.0)
        self.event_rows = self.d > 0

    def sums(self, beta):
        eta = self.z @ beta
        shift = eta.max() if eta.size else 0.0
        rel = np.exp(eta - shift)
        r = self.w * rel
        s0 = np.cumsum(r[::-1])[::-1][self.first]
        s1 = np.cumsum((r[:, None] * self.z)[::-1], axis=0)[::-1][self.first]
        if np.any(s0[self.event_rows] <= 0):
            raise NumericError("empty risk set at an event time with positive weight")
        return eta - shift, rel, s0, s1


def _evaluate(rs: _RiskSets, beta, need_info=True):
    eta, _, s0, s1 = rs.sums(beta)
    ev = rs.event_rows
    d = rs.d[ev]
    zbar = s1[ev] / s0[ev, None]
    loglik = float(np.sum(d * (eta[ev] - np.log(s0[ev]))))
    score = np.sum(d[:, None] * (rs.z[ev] - zbar), axis=0)
    if not need_info:
        return loglik, score, None
    r = rs.w * np.exp(eta)
    outer = r[:, None, None] * rs.z[:, :, None] * rs.z[:, None, :]
    s2 = np.cumsum(outer[::-1], axis=0)[::-1][rs.first][ev]
    info = np.sum(d[:, None, None] * (s2 / s0[ev, None, None] - zbar[:, :, None] * zbar[:, None, :]), axis=0)
    return loglik, score, 0.5 * (info + info.T)


def _as_beta(data: SurvData, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != data.k:
        raise DataError(f"beta has length {beta.shape[0]}, expected {data.k}")
    return beta


def log_partial_likelihood(data: SurvData, beta) -> float:
    """Weighted Breslow log partial likelihood at ``beta``."""
    return _evaluate(_RiskSets(data), _as_beta(data, beta), need_info=False)[0]


def score_and_information(data: SurvData, beta):
    """Weighted score vector and observed information (negative Hessian)."""
    _, score, info = _evaluate(_RiskSets(data), _as_beta(data, beta))
    return score, info


def _inverse(info):
    try:
        inv = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDesignError("information matrix is singular") from exc
    if not np.all(np.isfinite(inv)):
        raise DegenerateDesignError("information matrix is singular")
    return 0.5 * (inv + inv.T)


def _check_rank(info):
    k = info.shape[0]
    scale = max(np.abs(info).max(), np.finfo(float).tiny)
    if np.linalg.matrix_rank(info, tol=1e-10 * scale) < k or np.abs(info).max() == 0:
        raise DegenerateDesignError(f"information matrix has rank below {k}; a covariate is degenerate")


def fit_cox(data: SurvData, init=None, opts: SolverOptions = SolverOptions()) -> CoxFit:
    """Maximise the weighted partial likelihood by Newton-Raphson.

    Steps are halved until the log likelihood does not decrease. A fit that
    hits the iteration cap comes back with ``converged=False`` rather than
    raising, so callers can apply their own exclusion rules.
    """
    rs = _RiskSets(data)
    beta = np.zeros(data.k) if init is None else _as_beta(data, init).copy()
    loglik, score, info = _evaluate(rs, beta)
    _check_rank(info)
    trace = [loglik]
    converged = False
    iterations = 0
    while True:
        if np.max(np.abs(score)) < opts.tol:
            converged = True
            break
        if iterations >= opts.max_iter:
            break
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            break
        slack = 1e-12 * (1.0 + abs(loglik))
        for _ in range(opts.max_halvings):
            candidate = beta + step
            new = _evaluate(rs, candidate)
            if np.isfinite(new[0]) and new[0] >= loglik - slack:
                break
            step = step / 2
        else:
            break
        iterations += 1
        beta = candidate
        loglik, score, info = new
        trace.append(loglik)
    fit = CoxFit(beta, score, info, loglik, iterations, converged, False, tuple(trace))
    return CoxFit(beta, score, info, loglik, iterations, converged,
                  detect_separation(fit, opts.separation_bound), tuple(trace))


def detect_separation(fit: CoxFit, bound: float = 15.0) -> bool:
    """Flag fits whose coefficients run off to infinity."""
    if np.max(np.abs(fit.beta_hat)) > bound:
        return True
    if not fit.converged:
        trace = np.asarray(fit.loglik_trace)
        slack = 1e-12 * (1.0 + np.abs(trace[:-1])) if trace.size > 1 else 0.0
        return bool(trace.size < 2 or np.all(np.diff(trace) >= -slack))
    return False


def score_residuals(data: SurvData, fit: CoxFit) -> np.ndarray:
    """Per-subject score contributions ``U_i`` at the fitted coefficients.

    Includes the risk-set (compensator) term, so censored subjects get
    nonzero rows. ``weights @ U`` equals the weighted score.
    """
    if not fit.converged:
        raise StateError("score residuals need a converged fit")
    rs = _RiskSets(data)
    beta = _as_beta(data, fit.beta_hat)
    _, rel, s0, s1 = rs.sums(beta)
    ev = rs.event_rows
    positive = s0 > 0
    # s0 and s1 are already evaluated at each row's tie-group risk set
    zbar = np.zeros_like(rs.z)
    zbar[positive] = s1[positive] / s0[positive, None]
    dlam = np.zeros(data.n)
    dlam[ev] = rs.d[ev] / s0[ev]
    hazard = np.cumsum(dlam)[rs.last]
    centred = np.cumsum(dlam[:, None] * zbar, axis=0)[rs.last]
    dn = data.events[rs.order].astype(float)
    sorted_res = dn[:, None] * (rs.z - zbar) - rel[:, None] * (rs.z * hazard[:, None] - centred)
    out = np.empty_like(sorted_res)
    out[rs.order] = sorted_res
    return out


def delta_betas(fit: CoxFit, residuals) -> np.ndarray:
    """Approximate per-subject coefficient influence ``I^{-1} U_i``."""
    inv = _inverse(fit.information)
    return np.asarray(residuals, dtype=float) @ inv


def influence(data: SurvData, fit: CoxFit) -> InfluenceSet:
    res = score_residuals(data, fit)
    return InfluenceSet(res, delta_betas(fit, res))

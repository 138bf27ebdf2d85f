"""Balanced sampling by the cube method.

The flight phase is the fast variant that only ever looks at ``p + 1``
undecided units at a time. The landing phase rounds whatever is left by
drawing from the least-imbalanced distribution over completions that keeps
every unit's inclusion probability.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import ConfigurationError, DataError, InvariantViolation

RANK_TOL = 1e-10
SNAP_TOL = 1e-9
MAX_LANDING = 15


@dataclass(frozen=True, eq=False)
class BalancingProblem:
    pi: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2 or x.shape[0] != pi.shape[0]:
            raise DataError(f"x must have {pi.shape[0]} rows")
        if x.shape[1] < 1:
            raise DataError("need at least one balancing variable")
        if np.any(pi < 0) or np.any(pi > 1) or not np.all(np.isfinite(pi)):
            raise DataError("inclusion probabilities must lie in [0, 1]")
        if not np.all(np.isfinite(x)):
            raise DataError("balancing variables must be finite")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "x", x)

    @classmethod
    def with_pi(cls, pi, aux=None) -> "BalancingProblem":
        """Balance on ``pi`` itself (fixed sample size) plus ``aux`` columns."""
        pi = np.asarray(pi, dtype=float).reshape(-1)
        cols = [pi[:, None]]
        if aux is not None:
            aux = np.asarray(aux, dtype=float)
            cols.append(aux.reshape(pi.shape[0], -1))
        return cls(pi, np.hstack(cols))

    @property
    def n(self) -> int:
        return self.pi.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def design_matrix(self) -> np.ndarray:
        """Rows ``x_i / pi_i``; zero for units that can never be drawn."""
        out = np.zeros_like(self.x)
        pos = self.pi > 0
        out[pos] = self.x[pos] / self.pi[pos, None]
        return out

    def totals(self) -> np.ndarray:
        return self.x.sum(axis=0)

    @functools.cached_property
    def standardized(self) -> np.ndarray:
        """``x_i / pi_i`` with each column divided by its root mean square."""
        live = self.pi > 0
        x = self.x
        rms = np.sqrt(np.mean(x[live] ** 2, axis=0)) if live.any() else np.ones(self.p)
        rms[rms == 0] = 1.0
        a = np.zeros_like(x)
        a[live] = (x[live] / rms) / self.pi[live, None]
        return a

    @functools.cached_property
    def size_fixed(self) -> bool:
        return self.fixes_size()

    def fixes_size(self) -> bool:
        """True when some balancing column is proportional to ``pi``."""
        pi = self.pi
        scale = np.linalg.norm(pi)
        if scale == 0:
            return False
        unit = pi / scale
        for col in self.x.T:
            norm = np.linalg.norm(col)
            if norm > 0 and abs(abs(unit @ col) / norm - 1.0) < 1e-12:
                return True
        return False


@dataclass(frozen=True, eq=False)
class FlightState:
    probs: np.ndarray
    fixed_mask: np.ndarray

    @property
    def fractional(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed_mask)


@dataclass(frozen=True, eq=False)
class SampleSelection:
    indicators: np.ndarray
    pi: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_indicators(cls, indicators, pi) -> "SampleSelection":
        indicators = np.asarray(indicators, dtype=bool)
        pi = np.asarray(pi, dtype=float)
        weights = np.zeros(pi.shape[0])
        weights[indicators] = 1.0 / pi[indicators]
        return cls(indicators, pi, weights)

    @property
    def size(self) -> int:
        return int(self.indicators.sum())


def _kernel(a: list[list[float]], tol: float) -> Optional[list[float]]:
    """Gauss-Jordan on a list-of-rows matrix; returns a kernel vector or None."""
    rows = len(a)
    cols = len(a[0]) if rows else 0
    scale = max((abs(v) for row in a for v in row), default=0.0)
    thresh = tol * scale
    pivots = []
    row = 0
    for col in range(cols):
        if row == rows:
            break
        piv = row
        best = abs(a[row][col])
        for i in range(row + 1, rows):
            v = abs(a[i][col])
            if v > best:
                piv, best = i, v
        if best <= thresh:
            continue
        if piv != row:
            a[row], a[piv] = a[piv], a[row]
        inv = 1.0 / a[row][col]
        prow = [v * inv for v in a[row]]
        a[row] = prow
        for i in range(rows):
            if i != row:
                f = a[i][col]
                if f != 0.0:
                    ri = a[i]
                    a[i] = [ri[j] - f * prow[j] for j in range(cols)]
        pivots.append(col)
        row += 1
    if len(pivots) == cols:
        return None
    free = next(c for c in range(cols) if c not in pivots)
    u = [0.0] * cols
    u[free] = 1.0
    for r, pc in enumerate(pivots):
        u[pc] = -a[r][free]
    norm = sum(v * v for v in u) ** 0.5
    sign = 1.0
    for v in u:
        if abs(v) > 1e-12 * norm:
            sign = 1.0 if v > 0 else -1.0
            break
    return [sign * v / norm for v in u]


def null_vector(m, tol: float = RANK_TOL) -> Optional[np.ndarray]:
    """A unit vector in the kernel of ``m``, or None if ``m`` has full column rank.

    Gauss-Jordan elimination with partial pivoting. The first free column is
    set to one; the result is scaled to unit length with its first
    non-negligible entry positive, so rescaling the rows of ``m`` gives the
    same vector.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[1] == 0:
        return None
    if a.shape[0] == 0:
        u = np.zeros(a.shape[1])
        u[0] = 1.0
        return u
    u = _kernel(a.tolist(), tol)
    return None if u is None else np.asarray(u)


def _fly(probs, fixed, a, rng, order, trace):
    """Martingale walk on the balancing subspace, updating ``probs``/``fixed`` in place.

    Works on Python floats: each step touches only ``p + 1`` units, where
    array overhead would dominate.
    """
    p = a.shape[1]
    rows = a.tolist()
    pr = probs.tolist()
    fx = fixed.tolist()
    queue = [i for i in order.tolist() if not fx[i]]
    pos = 0
    window: list[int] = []
    lo_snap, hi_snap = SNAP_TOL, 1.0 - SNAP_TOL
    while True:
        while len(window) < p + 1 and pos < len(queue):
            window.append(queue[pos])
            pos += 1
        if not window:
            break
        u = _kernel([[rows[j][r] for j in window] for r in range(p)], RANK_TOL)
        if u is None:
            if len(window) == p + 1:
                raise InvariantViolation("no kernel vector for p + 1 columns")
            break
        lam1 = lam2 = float("inf")
        hit1 = hit2 = -1
        for c, j in enumerate(window):
            uc = u[c]
            if uc > 0:
                up, down = (1.0 - pr[j]) / uc, pr[j] / uc
            elif uc < 0:
                up, down = pr[j] / -uc, (1.0 - pr[j]) / -uc
            else:
                continue
            if up < lam1:
                lam1, hit1 = up, c
            if down < lam2:
                lam2, hit2 = down, c
        if not (0 < lam1 < float("inf") and 0 < lam2 < float("inf")):
            raise InvariantViolation("degenerate flight step")
        if rng.random() < lam2 / (lam1 + lam2):
            step, hit, land = lam1, hit1, 1.0 if u[hit1] > 0 else 0.0
        else:
            step, hit, land = -lam2, hit2, 0.0 if u[hit2] > 0 else 1.0
        keep = []
        for c, j in enumerate(window):
            v = land if c == hit else pr[j] + step * u[c]
            if v <= lo_snap:
                v = 0.0
            elif v >= hi_snap:
                v = 1.0
            pr[j] = v
            if v == 0.0 or v == 1.0:
                fx[j] = True
            else:
                keep.append(j)
        window = keep
        if trace is not None:
            probs[:] = pr
            fixed[:] = fx
            trace(probs, fixed)
    probs[:] = pr
    fixed[:] = fx


def fast_flight(problem: BalancingProblem, rng: np.random.Generator,
                trace: Callable | None = None) -> FlightState:
    """Flight phase: fix units to 0/1 while conserving every HT balance total.

    ``trace``, if given, is called with ``(probs, fixed_mask)`` after each
    step. The units are visited in a random order.
    """
    probs = problem.pi.copy()
    fixed = (probs <= SNAP_TOL) | (probs >= 1.0 - SNAP_TOL)
    probs[fixed] = np.round(probs[fixed])
    order = rng.permutation(problem.n)
    _fly(probs, fixed, problem.standardized, rng, order, trace)
    return FlightState(probs, fixed)


def _completions(r: int) -> np.ndarray:
    return np.array(list(itertools.product((0.0, 1.0), repeat=r)))


def _landing_distribution(cands, q, cost):
    m, r = cands.shape
    if m == 2 and r == 1:
        return np.array([1.0 - q[0], q[0]])
    if m == 2 and r == 2 and np.all(cands.sum(axis=1) == 1):
        # only (1,0) and (0,1) remain; marginals pin the masses
        first = cands[:, 0]
        return np.where(first == 1.0, q[0], q[1])
    a_eq = np.vstack([cands.T, np.ones(m)])
    b_eq = np.append(q, 1.0)
    res = optimize.linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise InvariantViolation(f"landing linear program failed: {res.message}")
    return res.x


def landing_phase(state: FlightState, problem: BalancingProblem, rng: np.random.Generator) -> SampleSelection:
    """Round the fractional units left by the flight phase.

    With ``r`` units left, all ``2**r`` completions are enumerated (only those
    of the right size when ``pi`` is a balancing column) and a distribution
    over them is chosen by linear programming: it reproduces each unit's
    current probability and minimises the expected squared relative error of
    the HT totals. Beyond ``MAX_LANDING`` units the trailing balancing
    variables are dropped and the flight resumes.
    """
    probs = state.probs.copy()
    fixed = state.fixed_mask.copy()
    frac = np.flatnonzero(~fixed)
    if frac.size > MAX_LANDING:
        keep = problem.p
        while frac.size > MAX_LANDING and keep > 1:
            keep -= 1
            reduced = BalancingProblem(problem.pi, problem.x[:, :keep])
            _fly(probs, fixed, reduced.standardized, rng, rng.permutation(problem.n), None)
            frac = np.flatnonzero(~fixed)
        if frac.size > MAX_LANDING:
            raise InvariantViolation("suppression of variables left too many fractional units")
    if frac.size == 0:
        return SampleSelection.from_indicators(probs > 0.5, problem.pi)

    a = problem.standardized
    target = a.T @ problem.pi
    denom = np.maximum(np.abs(target), 1.0)
    base = a[fixed & (probs > 0.5)].sum(axis=0)
    q = probs[frac]
    cands = _completions(frac.size)
    if problem.size_fixed:
        want = round(float(q.sum()))
        if abs(q.sum() - want) < 1e-6:
            cands = cands[cands.sum(axis=1) == want]
    totals = base + cands @ a[frac]
    cost = np.sum(((totals - target) / denom) ** 2, axis=1)
    mass = np.clip(_landing_distribution(cands, q, cost), 0.0, None)
    mass /= mass.sum()
    pick = cands[rng.choice(cands.shape[0], p=mass)]
    probs[frac] = pick
    return SampleSelection.from_indicators(probs > 0.5, problem.pi)


def cube_sample(problem: BalancingProblem, rng: np.random.Generator,
                trace: Callable | None = None) -> SampleSelection:
    """Draw one balanced sample with inclusion probabilities ``problem.pi``."""
    return landing_phase(fast_flight(problem, rng, trace), problem, rng)


def srs_sample(n_pop: int, n_samp: int, rng: np.random.Generator) -> SampleSelection:
    """Simple random sampling without replacement."""
    if n_samp < 0 or n_samp > n_pop:
        raise ConfigurationError(f"cannot draw {n_samp} units from {n_pop}")
    pi = np.full(n_pop, n_samp / n_pop if n_pop else 0.0)
    indicators = np.zeros(n_pop, dtype=bool)
    indicators[rng.choice(n_pop, size=n_samp, replace=False)] = True
    return SampleSelection.from_indicators(indicators, pi)


def check_balance(sel: SampleSelection, problem: BalancingProblem) -> np.ndarray:
    """Relative HT error of each balancing total for a realised sample."""
    totals = problem.totals()
    s = sel.indicators
    ht = (problem.x[s] / problem.pi[s, None]).sum(axis=0)
    return (ht - totals) / np.maximum(np.abs(totals), 1.0)

"""Cohort containers and the synthetic cohort generator used by the simulations."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import optimize

from .errors import ConfigurationError, NumericError, SchemaError

PILOT_DRAWS = 1_000_000
PILOT_TOLERANCE = 0.005


@dataclass(frozen=True)
class CohortRecord:
    id: int
    time: float
    event: bool
    z: tuple[float, ...]
    z_star: tuple[float, ...]
    stratum: int = 0

    def __post_init__(self):
        if not self.time >= 0:
            raise SchemaError(f"record {self.id}: time must be nonnegative, got {self.time}")


@dataclass(frozen=True, eq=False)
class Cohort:
    """Column-oriented cohort.

    Arrays are stored read-only; ``ids`` run 1..N in row order.
    """

    time: np.ndarray
    event: np.ndarray
    z: np.ndarray
    z_star: np.ndarray
    stratum: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float).reshape(-1)
        n = time.shape[0]
        event = np.asarray(self.event).reshape(-1)
        if event.dtype != bool:
            if not np.all(np.isin(event, (0, 1))):
                raise SchemaError("event indicators must be 0 or 1")
            event = event.astype(bool)
        z = np.asarray(self.z, dtype=float)
        z_star = np.asarray(self.z_star, dtype=float)
        if z.ndim == 1:
            z = z.reshape(n, -1) if n else z.reshape(0, 0)
        if z_star.ndim == 1:
            z_star = z_star.reshape(n, -1) if n else z_star.reshape(0, 0)
        stratum = np.asarray(self.stratum, dtype=np.int64).reshape(-1)
        ids = np.arange(1, n + 1) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        for name, arr in (("event", event), ("z", z), ("z_star", z_star), ("stratum", stratum), ("ids", ids)):
            if arr.shape[0] != n:
                raise SchemaError(f"{name} has {arr.shape[0]} rows, expected {n}")
        if n and not np.all(time >= 0):
            raise SchemaError("observed times must be nonnegative")
        if not np.array_equal(ids, np.arange(1, n + 1)):
            raise SchemaError("ids must be unique and contiguous 1..N")
        for name, arr in (("time", time), ("event", event), ("z", z), ("z_star", z_star), ("stratum", stratum), ("ids", ids)):
            arr = np.array(arr, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def covariate_dim(self) -> int:
        return self.z.shape[1] if self.z.ndim == 2 else 0

    @property
    def aux_dim(self) -> int:
        return self.z_star.shape[1] if self.z_star.ndim == 2 else 0

    def __len__(self):
        return self.n

    @property
    def records(self) -> list[CohortRecord]:
        return list(self.iter_records())

    def iter_records(self) -> Iterator[CohortRecord]:
        for i in range(self.n):
            yield CohortRecord(
                id=int(self.ids[i]),
                time=float(self.time[i]),
                event=bool(self.event[i]),
                z=tuple(float(v) for v in self.z[i]),
                z_star=tuple(float(v) for v in self.z_star[i]),
                stratum=int(self.stratum[i]),
            )

    @classmethod
    def from_records(cls, records: Sequence[CohortRecord], covariate_dim=None, aux_dim=None) -> "Cohort":
        records = list(records)
        if not records:
            return cls.empty(covariate_dim or 0, aux_dim or 0)
        k = len(records[0].z) if covariate_dim is None else covariate_dim
        m = len(records[0].z_star) if aux_dim is None else aux_dim
        for r in records:
            if len(r.z) != k or len(r.z_star) != m:
                raise SchemaError(f"record {r.id}: covariate dimensions differ from ({k}, {m})")
        if [r.id for r in records] != list(range(1, len(records) + 1)):
            raise SchemaError("ids must be unique and contiguous 1..N")
        return cls(
            time=[r.time for r in records],
            event=np.array([r.event for r in records], dtype=bool),
            z=np.array([r.z for r in records], dtype=float).reshape(len(records), k),
            z_star=np.array([r.z_star for r in records], dtype=float).reshape(len(records), m),
            stratum=[r.stratum for r in records],
        )

    @classmethod
    def empty(cls, covariate_dim: int, aux_dim: int) -> "Cohort":
        return cls(
            time=np.empty(0),
            event=np.empty(0, dtype=bool),
            z=np.empty((0, covariate_dim)),
            z_star=np.empty((0, aux_dim)),
            stratum=np.empty(0, dtype=np.int64),
        )

    def with_strata(self, labels) -> "Cohort":
        return Cohort(self.time, self.event, self.z, self.z_star, labels)

    def censoring_fraction(self) -> float:
        return float(1.0 - self.event.mean()) if self.n else float("nan")

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, a), getattr(other, a))
            for a in ("time", "event", "z", "z_star", "stratum")
        ) and self.z.shape == other.z.shape and self.z_star.shape == other.z_star.shape


@dataclass(frozen=True)
class SimCohortSpec:
    """Simulation protocol for one synthetic cohort.

    ``model_columns`` selects which of the generated covariates are the
    phase-2 covariates ``z``; ``aux_columns`` selects the cohort-wide
    auxiliaries ``z_star``. The default pairs the risk factor with its
    correlated companion as the auxiliary.
    """

    n_cohort: int
    beta_true: tuple[float, ...] = (float(np.log(2.0)), 0.0)
    rho: float = 0.8
    censor_target: float = 0.2
    covariate_kind: str = "continuous"
    seed: int = 0
    model_columns: tuple[int, ...] = (0,)
    aux_columns: tuple[int, ...] = (1,)

    def __post_init__(self):
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "model_columns", tuple(int(c) for c in self.model_columns))
        object.__setattr__(self, "aux_columns", tuple(int(c) for c in self.aux_columns))
        self.validate()

    def validate(self):
        k = len(self.beta_true)
        if self.n_cohort < 0:
            raise ConfigurationError("n_cohort must be nonnegative")
        if k == 0:
            raise ConfigurationError("beta_true must have at least one entry")
        if not -1.0 < self.rho < 1.0:
            raise ConfigurationError("rho must lie in (-1, 1)")
        if k > 2 and self.rho < -1.0 / (k - 1):
            raise ConfigurationError("equicorrelation matrix is not positive definite for this rho")
        if not 0.0 < self.censor_target < 1.0:
            raise ConfigurationError("censor_target must lie in (0, 1)")
        if self.covariate_kind not in ("continuous", "binary"):
            raise ConfigurationError(f"unknown covariate kind {self.covariate_kind!r}")
        for cols in (self.model_columns, self.aux_columns):
            if not cols or any(c < 0 or c >= k for c in cols):
                raise ConfigurationError(f"column selection {cols} out of range for {k} covariates")

    @property
    def dim(self) -> int:
        return len(self.beta_true)


def binarize(z) -> np.ndarray:
    """Elementwise indicator of ``z > 0`` as floats."""
    return (np.asarray(z, dtype=float) > 0).astype(float)


def _correlation(dim: int, rho: float) -> np.ndarray:
    cov = np.full((dim, dim), rho)
    np.fill_diagonal(cov, 1.0)
    return cov


def draw_covariates(spec: SimCohortSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.dim == 1:
        z = rng.standard_normal((n, 1))
    else:
        chol = np.linalg.cholesky(_correlation(spec.dim, spec.rho))
        z = rng.standard_normal((n, spec.dim)) @ chol.T
    if spec.covariate_kind == "binary":
        z = binarize(z)
    return z


@functools.lru_cache(maxsize=64)
def _tuned_rate(beta, rho, target, kind, pilot_seed):
    spec = SimCohortSpec(n_cohort=0, beta_true=beta, rho=rho, censor_target=target, covariate_kind=kind,
                         model_columns=(0,), aux_columns=(0,))
    z = draw_covariates(spec, PILOT_DRAWS, np.random.default_rng(pilot_seed))
    hazard = np.exp(z @ np.asarray(beta))

    # P(C < T | Z) = r / (r + hazard) for exponential C and T.
    def excess(log_rate):
        r = np.exp(log_rate)
        return float(np.mean(r / (r + hazard))) - target

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if excess(lo) < 0:
            break
        lo -= 2.0
    else:
        raise NumericError("could not bracket the censoring rate from below")
    for _ in range(200):
        if excess(hi) > 0:
            break
        hi += 2.0
    else:
        raise NumericError("could not bracket the censoring rate from above")
    log_rate = optimize.bisect(excess, lo, hi, xtol=1e-12, maxiter=500)
    achieved = excess(log_rate) + target
    if abs(achieved - target) > PILOT_TOLERANCE:
        raise NumericError(f"pilot censoring {achieved:.4f} misses target {target}")
    return float(np.exp(log_rate)), achieved


def tune_censoring_rate(spec: SimCohortSpec, pilot_seed: int = 20240607) -> float:
    """Exponential censoring rate giving ``spec.censor_target`` censoring.

    The rate is found by bisection against a fixed pilot sample of one
    million covariate draws, so the answer depends only on the covariate law,
    not on the cohort seed.
    """
    rate, _ = _tuned_rate(spec.beta_true, spec.rho, spec.censor_target, spec.covariate_kind, pilot_seed)
    return rate


def pilot_censoring(spec: SimCohortSpec, pilot_seed: int = 20240607) -> float:
    """Censoring fraction the pilot sample attains at the tuned rate."""
    return _tuned_rate(spec.beta_true, spec.rho, spec.censor_target, spec.covariate_kind, pilot_seed)[1]


def generate_cohort(spec: SimCohortSpec, rng: np.random.Generator) -> Cohort:
    """Draw a cohort from the Cox model with unit exponential baseline hazard."""
    spec.validate()
    n = spec.n_cohort
    if n == 0:
        return Cohort.empty(len(spec.model_columns), len(spec.aux_columns))
    rate = tune_censoring_rate(spec)
    z = draw_covariates(spec, n, rng)
    t = rng.standard_exponential(n) / np.exp(z @ np.asarray(spec.beta_true))
    c = rng.standard_exponential(n) / rate
    return Cohort(
        time=np.minimum(t, c),
        event=t < c,
        z=z[:, list(spec.model_columns)],
        z_star=z[:, list(spec.aux_columns)],
        stratum=np.zeros(n, dtype=np.int64),
    )

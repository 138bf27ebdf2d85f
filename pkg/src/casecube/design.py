"""Two-phase designs: auxiliary influence, per-stratum sampling, weighting and fitting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .calibration import CalibrationSpec, calibrate_weights
from .cohort import Cohort
from .cox import SolverOptions, SurvData, delta_betas, fit_cox, score_residuals
from .cube import BalancingProblem, SampleSelection, cube_sample, srs_sample
from .errors import ConfigurationError, DegenerateDesignError, DesignError, NumericError, SchemaError
from .variance import VarianceResult, phase2_component, sandwich

KINDS = ("SRS", "BS", "CAL", "BSc")
MODES = ("subcohort_only", "case_cohort")
BALANCED = ("BS", "BSc")
CALIBRATED = ("CAL", "BSc")


@dataclass(frozen=True)
class StratumSpec:
    label: int
    size: Optional[int] = None
    population: Optional[int] = None
    certainty: bool = False

    def __post_init__(self):
        if self.certainty:
            if self.size is not None and self.population is not None and self.size != self.population:
                raise ConfigurationError(f"certainty stratum {self.label} must have n_h = N_h")
        elif self.size is None or self.size <= 0:
            raise ConfigurationError(f"sampled stratum {self.label} needs a positive sample size")
        elif self.population is not None and self.size > self.population:
            raise ConfigurationError(f"stratum {self.label}: n_h={self.size} exceeds N_h={self.population}")


@dataclass(frozen=True)
class DesignSpec:
    kind: str
    mode: str = "case_cohort"
    strata: tuple[StratumSpec, ...] = ()
    seed: int = 0

    def __post_init__(self):
        kind = _canonical_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        object.__setattr__(self, "strata", tuple(self.strata))
        labels = [s.label for s in self.strata]
        if len(set(labels)) != len(labels):
            raise ConfigurationError("duplicate stratum labels")

    @classmethod
    def simple(cls, kind: str, n: int, mode: str = "case_cohort", seed: int = 0) -> "DesignSpec":
        """One sampled stratum (label 0) of size ``n``."""
        return cls(kind, mode, (StratumSpec(0, n),), seed)

    @classmethod
    def census(cls, labels=(0,), seed: int = 0) -> "DesignSpec":
        return cls("SRS", "subcohort_only", tuple(StratumSpec(int(l), certainty=True) for l in labels), seed)

    @classmethod
    def stratified(cls, kind: str, sampled: Mapping[int, int], labels, mode: str = "subcohort_only",
                   seed: int = 0) -> "DesignSpec":
        """Sample ``sampled[label]`` units in the listed strata; take every other stratum whole."""
        strata = []
        for label in sorted(set(int(l) for l in labels) | set(sampled)):
            if label in sampled:
                strata.append(StratumSpec(label, int(sampled[label])))
            else:
                strata.append(StratumSpec(label, certainty=True))
        return cls(kind, mode, tuple(strata), seed)

    @property
    def is_census(self) -> bool:
        return all(s.certainty for s in self.strata)


def _canonical_kind(kind: str) -> str:
    for k in KINDS:
        if k.lower() == str(kind).lower():
            return k
    raise ConfigurationError(f"unknown design kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True, eq=False)
class FitReport:
    beta_hat: np.ndarray
    variance: Optional[VarianceResult]
    separation_flag: bool
    design: DesignSpec
    n_phase2: int
    converged: bool = True
    degenerate: bool = False
    nonpositive_weights: bool = False

    @property
    def usable(self) -> bool:
        return self.converged and not self.separation_flag and not self.degenerate and self.variance is not None


@dataclass(frozen=True, eq=False)
class _Block:
    rows: np.ndarray
    balancing: np.ndarray
    size: int


def auxiliary_delta_betas(cohort: Cohort, opts: SolverOptions = SolverOptions()) -> np.ndarray:
    """Delta-betas of a census Cox fit on the auxiliaries ``z_star``."""
    if cohort.aux_dim == 0:
        raise DesignError("cohort has no auxiliary variables")
    data = SurvData(cohort.time, cohort.event, cohort.z_star)
    try:
        fit = fit_cox(data, opts=opts)
    except DegenerateDesignError as exc:
        raise DesignError(f"auxiliary model is degenerate: {exc}") from exc
    if not fit.converged or fit.separation_flag:
        raise DesignError("auxiliary Cox model did not converge to a finite estimate")
    return delta_betas(fit, score_residuals(data, fit))


def run_design(cohort: Cohort, design: DesignSpec, rng: np.random.Generator | None = None,
               aux: np.ndarray | None = None, opts: SolverOptions = SolverOptions()):
    """Draw a phase-2 sample, weight it, fit the weighted Cox model and its variance.

    Returns ``(selection, weights, report)``: ``selection`` holds the design
    weights ``xi/pi`` over the whole cohort and ``weights`` the analysis
    weights (calibrated for CAL and BSc).
    """
    if rng is None:
        rng = np.random.default_rng(design.seed)
    n = cohort.n
    labels = cohort.stratum
    specs = {s.label: s for s in design.strata}
    missing = sorted(set(np.unique(labels).tolist()) - set(specs))
    if missing:
        raise DesignError(f"design does not cover strata {missing}")
    forced = cohort.event.copy() if design.mode == "case_cohort" else np.zeros(n, dtype=bool)
    if aux is None and design.kind in BALANCED + CALIBRATED and not design.is_census:
        aux = auxiliary_delta_betas(cohort, opts)

    pi = np.ones(n)
    chosen = forced.copy()
    weights = np.where(forced, 1.0, 0.0)
    nonpositive = False
    blocks = []
    for spec in design.strata:
        members = np.flatnonzero((labels == spec.label) & ~forced)
        if spec.certainty:
            chosen[members] = True
            weights[members] = 1.0
            continue
        pop = members.shape[0]
        if spec.population is not None and spec.population != pop:
            raise DesignError(f"stratum {spec.label} has {pop} eligible units, design says {spec.population}")
        if pop == 0:
            raise DesignError(f"sampled stratum {spec.label} is empty")
        if spec.size > pop:
            raise DesignError(f"stratum {spec.label}: cannot sample {spec.size} of {pop}")
        pi_h = np.full(pop, spec.size / pop)
        if design.kind in BALANCED:
            sel = cube_sample(BalancingProblem.with_pi(pi_h, aux[members]), rng)
        else:
            sel = srs_sample(pop, spec.size, rng)
        picked = members[sel.indicators]
        pi[members] = pi_h
        chosen[picked] = True
        w = sel.weights[sel.indicators]
        if design.kind in CALIBRATED:
            x_s = np.column_stack([np.ones(picked.shape[0]), aux[picked]])
            targets = np.concatenate([[pop], aux[members].sum(axis=0)])
            cal = calibrate_weights(CalibrationSpec(w, x_s, targets))
            w = cal.weights
            nonpositive |= cal.nonpositive
        weights[picked] = w
        # variance regressors: the variables the design or the weights balance on
        cols = pi_h[:, None] if design.kind == "SRS" else np.column_stack([pi_h, aux[members]])
        blocks.append(_Block(picked, cols[sel.indicators], spec.size))

    selection = SampleSelection.from_indicators(chosen, pi)
    rows = np.flatnonzero(chosen)
    report = _fit_phase2(cohort, rows, weights, pi, blocks, design, opts)
    if nonpositive:
        report = FitReport(report.beta_hat, report.variance, report.separation_flag, design,
                           report.n_phase2, report.converged, report.degenerate, True)
    return selection, weights, report


def _fit_phase2(cohort, rows, weights, pi, blocks, design, opts) -> FitReport:
    k = cohort.covariate_dim
    if np.any(weights[rows] < 0):
        return FitReport(np.full(k, np.nan), None, False, design, rows.shape[0], False, True, True)
    try:
        data = SurvData(cohort.time[rows], cohort.event[rows], cohort.z[rows], weights[rows])
        fit = fit_cox(data, opts=opts)
    except (DegenerateDesignError, NumericError):
        return FitReport(np.full(k, np.nan), None, False, design, rows.shape[0], False, True)
    if not fit.converged or fit.separation_flag:
        return FitReport(fit.beta_hat, None, True, design, rows.shape[0], fit.converged)
    residuals = score_residuals(data, fit)
    position = np.full(cohort.n, -1)
    position[rows] = np.arange(rows.shape[0])
    v = np.zeros((k, k))
    try:
        for block in blocks:
            local = position[block.rows]
            v += phase2_component(pi[block.rows], block.balancing, residuals[local], n=block.size)
        variance = sandwich(fit, v)
    except DegenerateDesignError:
        return FitReport(fit.beta_hat, None, False, design, rows.shape[0], True, True)
    return FitReport(fit.beta_hat, variance, False, design, rows.shape[0], True)


@dataclass(frozen=True)
class NWTSRules:
    """Where the stratification variables live in an ingested cohort.

    Each field names a cohort column, ``z<j>`` or ``zs<j>`` (1-based).
    Stage is numeric 1..4; histology is 1 for unfavourable; age is in years.
    """

    stage: str = "zs1"
    histology: str = "zs2"
    age: str = "zs3"
    advanced_stage: float = 3.0
    infant_age: float = 1.0


# Table layout: controls with favourable histology in the three largest cells.
NWTS_SAMPLED = {1: 120, 0: 160, 4: 120}


def cohort_column(cohort: Cohort, ref: str) -> np.ndarray:
    ref = ref.strip().lower()
    try:
        if ref.startswith("zs"):
            return cohort.z_star[:, int(ref[2:]) - 1]
        if ref.startswith("z"):
            return cohort.z[:, int(ref[1:]) - 1]
    except (ValueError, IndexError):
        pass
    raise SchemaError(f"cohort has no column {ref!r}")


def nwts_label(event, advanced, unfavorable, infant):
    """Stratum label ``8*event + 4*advanced + 2*unfavorable + infant`` in 0..15."""
    return (8 * np.asarray(event, dtype=int) + 4 * np.asarray(advanced, dtype=int)
            + 2 * np.asarray(unfavorable, dtype=int) + np.asarray(infant, dtype=int))


def build_nwts_strata(cohort: Cohort, rules: NWTSRules = NWTSRules()) -> np.ndarray:
    """Sixteen strata from failure status, stage group, histology and age < 1."""
    stage = cohort_column(cohort, rules.stage)
    hist = cohort_column(cohort, rules.histology)
    age = cohort_column(cohort, rules.age)
    return nwts_label(cohort.event, stage >= rules.advanced_stage, hist > 0.5, age < rules.infant_age)

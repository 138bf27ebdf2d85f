"""Monte Carlo harness for the fixed-cohort and random-cohort experiments."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cohort import Cohort, SimCohortSpec, generate_cohort
from .cox import SurvData, fit_cox
from .design import BALANCED, CALIBRATED, DesignSpec, _canonical_kind, auxiliary_delta_betas, run_design
from .errors import (AggregationError, ConfigurationError, DegenerateDesignError, DesignError,
                     ExperimentError, NumericError)

SETUPS = ("fixed", "random")
WORKERS_ENV = "CASECUBE_WORKERS"


@dataclass(frozen=True, eq=False)
class ReplicationSummary:
    design: str
    mean: np.ndarray
    sd: Optional[np.ndarray]
    se: Optional[np.ndarray]
    re: Optional[np.ndarray]
    n_excluded: int = 0
    n_kept: int = 0
    se1: Optional[np.ndarray] = None
    se2: Optional[np.ndarray] = None
    coef_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    setup: str
    cohort: SimCohortSpec
    subcohort_size: int
    designs: tuple[str, ...] = ("SRS", "BS")
    mode: str = "subcohort_only"
    replications: int = 500
    seed: int = 0
    workers: Optional[int] = None

    def __post_init__(self):
        if self.setup not in SETUPS:
            raise ConfigurationError(f"setup must be one of {SETUPS}")
        if self.replications <= 0:
            raise ConfigurationError("replications must be positive")
        designs = tuple(_design_label(d) for d in self.designs)
        if not designs:
            raise ConfigurationError("no designs requested")
        object.__setattr__(self, "designs", designs)
        DesignSpec.simple("SRS", max(self.subcohort_size, 1), self.mode)
        if self.subcohort_size <= 0:
            raise ConfigurationError("subcohort size must be positive")


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    summaries: list[ReplicationSummary]
    raw: list[dict] = field(repr=False, default_factory=list)

    def __iter__(self):
        return iter(self.summaries)

    def __getitem__(self, design: str) -> ReplicationSummary:
        for s in self.summaries:
            if s.design == design:
                return s
        raise KeyError(design)


def _design_label(name: str) -> str:
    if str(name).lower() == "census":
        return "census"
    return _canonical_kind(name)


def _spec_for(label: str, config: ExperimentConfig) -> DesignSpec:
    if label == "census":
        return DesignSpec.census()
    return DesignSpec.simple(label, config.subcohort_size, config.mode, config.seed)


def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


# draws are keyed by sampling mechanism, so CAL re-weights the SRS sample and
# BSc re-weights the BS sample of the same replication
_MECHANISM = {"SRS": 1, "CAL": 1, "BS": 2, "BSc": 2, "census": 3}


def compute_re(sd, reference):
    """Relative efficiency: design dispersion over the full-cohort reference."""
    reference = np.asarray(reference, dtype=float)
    if np.any(reference <= 0):
        raise ConfigurationError("reference dispersion must be positive")
    out = np.asarray(sd, dtype=float) / reference
    return float(out) if out.ndim == 0 else out


def summarize(estimates: Sequence, ses: Sequence, reference, excluded: int = 0, design: str = "",
              se1: Sequence | None = None, se2: Sequence | None = None,
              coef_names: tuple[str, ...] = ()) -> ReplicationSummary:
    """Mean, sample SD (n - 1 divisor), mean SE and RE over kept replications."""
    est = np.asarray(estimates, dtype=float)
    if est.size == 0:
        raise AggregationError(f"no usable replications for {design or 'design'}")
    est = est.reshape(est.shape[0], -1)
    sd = est.std(axis=0, ddof=1) if est.shape[0] > 1 else np.zeros(est.shape[1])

    def _mean(vals):
        if vals is None or len(vals) == 0:
            return None
        return np.asarray(vals, dtype=float).reshape(len(vals), -1).mean(axis=0)

    return ReplicationSummary(
        design=design,
        mean=est.mean(axis=0),
        sd=sd,
        se=_mean(ses),
        re=compute_re(sd, reference) if reference is not None else None,
        n_excluded=int(excluded),
        n_kept=est.shape[0],
        se1=_mean(se1),
        se2=_mean(se2),
        coef_names=coef_names,
    )


def _full_cohort(cohort: Cohort):
    data = SurvData(cohort.time, cohort.event, cohort.z)
    fit = fit_cox(data)
    if not fit.converged or fit.separation_flag:
        raise ExperimentError("full-cohort fit did not converge")
    return fit.beta_hat, np.sqrt(np.diag(fit.information_inverse()))


def _run_designs(cohort, aux, config, rep):
    out = {}
    for label in config.designs:
        rng = _stream(config.seed, rep, _MECHANISM[label])
        _, _, report = run_design(cohort, _spec_for(label, config), rng, aux=aux)
        if report.usable:
            v = report.variance
            out[label] = ("ok", report.beta_hat, v.se_total, v.se1, v.se2)
        else:
            status = "separated" if report.separation_flag else "degenerate"
            out[label] = (status, report.beta_hat, None, None, None)
    return out


def _needs_aux(config):
    return any(d in BALANCED + CALIBRATED for d in config.designs)


def _fixed_rep(args):
    cohort, aux, config, rep = args
    return _run_designs(cohort, aux, config, rep)


def _random_rep(args):
    config, rep = args
    cohort = generate_cohort(config.cohort, _stream(config.seed, rep, 0))
    try:
        fc = _full_cohort(cohort)
        aux = auxiliary_delta_betas(cohort) if _needs_aux(config) else None
    except (ExperimentError, DesignError, DegenerateDesignError):
        return None
    return fc, _run_designs(cohort, aux, config, rep)


def _workers(config):
    if config.workers is not None:
        return max(1, int(config.workers))
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def _map(fn, jobs, workers):
    if workers == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def _coef_names(k):
    return tuple(f"z{j + 1}" for j in range(k))


def _raw_rows(rep, results):
    rows = []
    for label, (status, beta, se, se1, se2) in results.items():
        for j, b in enumerate(np.atleast_1d(beta)):
            rows.append({
                "rep": rep, "design": label, "coef": f"z{j + 1}", "estimate": float(b),
                "se": float(se[j]) if se is not None else float("nan"),
                "se1": float(se1[j]) if se1 is not None else float("nan"),
                "se2": float(se2[j]) if se2 is not None else float("nan"),
                "status": status,
            })
    return rows


def run_setup1(config: ExperimentConfig) -> ExperimentResult:
    """Repeated phase-2 sampling from one fixed cohort.

    The reported SE is the phase-2 component, the only source of variation
    across replications; RE divides by the full-cohort model SE.
    """
    if config.setup != "fixed":
        raise ConfigurationError("run_setup1 needs setup='fixed'")
    cohort = generate_cohort(config.cohort, _stream(config.seed, 0, 0))
    try:
        beta_fc, se_fc = _full_cohort(cohort)
    except (DegenerateDesignError, NumericError) as exc:
        raise ExperimentError(f"full-cohort fit failed: {exc}") from exc
    aux = auxiliary_delta_betas(cohort) if _needs_aux(config) else None
    results = _map(_fixed_rep, [(cohort, aux, config, r) for r in range(config.replications)],
                   _workers(config))
    names = _coef_names(cohort.covariate_dim)
    summaries = [ReplicationSummary("FC", beta_fc, None, se_fc, None, coef_names=names)]
    raw = []
    for rep, res in enumerate(results):
        raw.extend(_raw_rows(rep, res))
    for label in config.designs:
        kept = [res[label] for res in results if res[label][0] == "ok"]
        excluded = config.replications - len(kept)
        summaries.append(summarize(
            [k[1] for k in kept], [k[4] for k in kept], se_fc, excluded, label, coef_names=names))
    return ExperimentResult(config, summaries, raw)


def run_setup2(config: ExperimentConfig) -> ExperimentResult:
    """A fresh cohort per replication; RE divides by the SD of the full-cohort estimates."""
    if config.setup != "random":
        raise ConfigurationError("run_setup2 needs setup='random'")
    results = _map(_random_rep, [(config, r) for r in range(config.replications)], _workers(config))
    good = [(rep, res) for rep, res in enumerate(results) if res is not None]
    if not good:
        raise ExperimentError("every full-cohort fit failed")
    lost = config.replications - len(good)
    names = _coef_names(len(config.cohort.model_columns))
    fc_est = np.array([res[0][0] for _, res in good])
    fc_se = np.array([res[0][1] for _, res in good])
    fc = summarize(fc_est, fc_se, None, lost, "FC", coef_names=names)
    summaries = [fc]
    raw = []
    for rep, (fc_vals, res) in good:
        raw.extend(_raw_rows(rep, {"FC": ("ok", fc_vals[0], fc_vals[1], fc_vals[1], None), **res}))
    for label in config.designs:
        kept = [res[1][label] for _, res in good if res[1][label][0] == "ok"]
        excluded = config.replications - len(kept)
        summaries.append(summarize(
            [k[1] for k in kept], [k[2] for k in kept], fc.sd, excluded, label,
            se1=[k[3] for k in kept], se2=[k[4] for k in kept], coef_names=names))
    return ExperimentResult(config, summaries, raw)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    return run_setup1(config) if config.setup == "fixed" else run_setup2(config)

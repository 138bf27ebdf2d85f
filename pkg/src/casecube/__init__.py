"""Balanced subcohort sampling for stratified case-cohort studies.

The cube method draws subcohorts whose Horvitz-Thompson totals of chosen
auxiliaries match the cohort exactly. Balancing on the delta-betas of a Cox
model fitted to cohort-wide proxies shrinks the phase-2 variance of the
weighted Cox estimator.
"""

from .calibration import CalibrationResult, CalibrationSpec, calibrate_weights
from .cohort import Cohort, CohortRecord, SimCohortSpec, generate_cohort, tune_censoring_rate
from .cox import (CoxFit, SolverOptions, SurvData, delta_betas, detect_separation, fit_cox,
                  log_partial_likelihood, score_and_information, score_residuals)
from .cube import (BalancingProblem, FlightState, SampleSelection, check_balance, cube_sample,
                   fast_flight, landing_phase, null_vector, srs_sample)
from .design import (DesignSpec, FitReport, NWTSRules, StratumSpec, auxiliary_delta_betas,
                     build_nwts_strata, run_design)
from .errors import (AggregationError, CasecubeError, ConfigurationError, DataError,
                     DegenerateDesignError, DesignError, ExperimentError, NumericError, ParseError,
                     RankDeficiencyError, SchemaError, SeparationError, StateError)
from .io import emit_summary_table, parse_cohort_csv, write_cohort_csv
from .simulation import (ExperimentConfig, ExperimentResult, ReplicationSummary, compute_re,
                         run_experiment, run_setup1, run_setup2, summarize)
from .variance import VarianceResult, phase2_component, sandwich

__version__ = "0.1.0"

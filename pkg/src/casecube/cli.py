"""Command line front end: ``casecube {simulate,sample,fit,calibrate}``.

Exit status is 0 on success, 1 for usage errors, 2 for bad input data and
3 for numeric failures such as perfect separation.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Sequence

import numpy as np

from .calibration import CalibrationSpec, calibrate_weights
from .cohort import SimCohortSpec
from .cox import SurvData, fit_cox
from .design import NWTS_SAMPLED, DesignSpec, auxiliary_delta_betas, build_nwts_strata, run_design
from .errors import CasecubeError, ConfigurationError, DataError, SeparationError
from .io import (emit_fit_table, emit_summary_table, parse_cohort_csv,
                 parse_selection_csv, parse_strata, read_config, write_raw_csv, write_selection_csv)
from .simulation import ExperimentConfig, run_experiment

MODE_ALIASES = {
    "sc": "subcohort_only", "subcohort": "subcohort_only", "subcohort_only": "subcohort_only",
    "ccs": "case_cohort", "case_cohort": "case_cohort", "case-cohort": "case_cohort",
}

# applied after the config file, so a file value beats these but a flag beats the file
DEFAULTS = {
    "simulate": {"rho": 0.8, "censoring": 0.2, "covariates": "continuous", "designs": "srs,bs",
                 "reps": 500, "mode": "subcohort_only", "format": "tsv"},
    "sample": {"design": "bs", "mode": "case_cohort", "format": "tsv"},
    "fit": {"format": "tsv"},
    "calibrate": {},
}
REQUIRED = {
    "simulate": ("setup", "cohort_size", "subcohort_size", "seed"),
    "sample": ("input", "seed"),
    "fit": ("input",),
    "calibrate": ("input", "selection"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _mode(text: str) -> str:
    try:
        return MODE_ALIASES[text.strip().lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"unknown mode {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="casecube", description="Balanced subcohort sampling for case-cohort studies.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    sim = sub.add_parser("simulate", help="Monte Carlo experiment on synthetic cohorts")
    sim.add_argument("--setup", choices=("fixed", "random"))
    sim.add_argument("--cohort-size", type=int)
    sim.add_argument("--subcohort-size", type=int)
    sim.add_argument("--rho", type=float)
    sim.add_argument("--censoring", type=float, help="target censored fraction")
    sim.add_argument("--covariates", choices=("continuous", "binary"))
    sim.add_argument("--beta", type=_floats, help="true coefficients, default log(2),0")
    sim.add_argument("--designs", help="comma list from srs,bs,cal,bsc,census")
    sim.add_argument("--mode", type=_mode, help="sc (subcohort only) or ccs (cases added)")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--workers", type=int, help="worker processes (env CASECUBE_WORKERS)")
    sim.add_argument("--raw", help="write per-replication estimates to this CSV")

    smp = sub.add_parser("sample", help="draw a phase-2 sample from a cohort CSV and fit it")
    smp.add_argument("--input")
    smp.add_argument("--design", help="srs, bs, cal or bsc")
    smp.add_argument("--subcohort-size", type=int)
    smp.add_argument("--strata", help="label:size or label:all entries, comma separated")
    smp.add_argument("--nwts", action="store_true", default=None,
                     help="relabel strata by the 16-cell outcome/stage/histology/age rule")
    smp.add_argument("--mode", type=_mode)
    smp.add_argument("--output", help="selection CSV (id,stratum,selected,pi,weight)")

    fit = sub.add_parser("fit", help="weighted Cox fit of a cohort CSV")
    fit.add_argument("--input")
    fit.add_argument("--selection", help="selection CSV; only selected rows enter, with its weights")

    cal = sub.add_parser("calibrate", help="calibrate the weights of a selection CSV")
    cal.add_argument("--input")
    cal.add_argument("--selection")
    cal.add_argument("--output")

    for p in (sim, smp, fit, cal):
        p.add_argument("--config", help="file of key = value lines; flags override it")
        if p is not cal:
            p.add_argument("--format", choices=("tsv", "csv"))
        if p in (sim, smp):
            p.add_argument("--seed", type=int)
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise AssertionError("no subcommands")


def resolve(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse flags, fold in the config file and defaults, check required values."""
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = _subparser(parser, args.command)
    if args.config:
        actions = {a.dest: a for a in sub._actions}
        for key, text in read_config(args.config).items():
            dest = key.replace("-", "_")
            if dest not in actions or dest in ("config", "help"):
                raise UsageError(f"{sub.format_usage()}config key {key!r} is not a flag of {args.command}")
            if getattr(args, dest) is not None:
                continue
            action = actions[dest]
            if isinstance(action, argparse._StoreTrueAction):
                value = text.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    value = action.type(text) if action.type else text
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise UsageError(f"{sub.format_usage()}config key {key!r}: {exc}") from None
                if action.choices is not None and value not in action.choices:
                    raise UsageError(f"{sub.format_usage()}config key {key!r}: {value!r} not in {action.choices}")
            setattr(args, dest, value)
    for dest, value in DEFAULTS[args.command].items():
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    missing = [d for d in REQUIRED[args.command] if getattr(args, d) is None]
    if missing:
        flags = ", ".join("--" + d.replace("_", "-") for d in missing)
        raise UsageError(f"{sub.format_usage()}{sub.prog}: error: missing required {flags}")
    return args


def _simulate(args, out) -> int:
    beta = args.beta if args.beta is not None else (math.log(2.0), 0.0)
    spec = SimCohortSpec(args.cohort_size, beta, args.rho, args.censoring, args.covariates, args.seed)
    config = ExperimentConfig(args.setup, spec, args.subcohort_size,
                              tuple(d.strip() for d in args.designs.split(",") if d.strip()),
                              args.mode, args.reps, args.seed, args.workers)
    result = run_experiment(config)
    out.write(emit_summary_table(result.summaries, args.format))
    if args.raw:
        write_raw_csv(result.raw, args.raw)
    return 0


def _sample(args, out) -> int:
    cohort = parse_cohort_csv(args.input)
    if args.nwts:
        cohort = cohort.with_strata(build_nwts_strata(cohort))
    if args.strata:
        spec = DesignSpec(args.design, args.mode, parse_strata(args.strata), args.seed)
    elif args.nwts:
        spec = DesignSpec.stratified(args.design, NWTS_SAMPLED, cohort.stratum, args.mode, args.seed)
    elif args.subcohort_size:
        spec = DesignSpec.simple(args.design, args.subcohort_size, args.mode, args.seed)
    else:
        raise ConfigurationError("sample needs --subcohort-size, --strata or --nwts")
    selection, weights, report = run_design(cohort, spec, np.random.default_rng(args.seed))
    if args.output:
        write_selection_csv(cohort, selection.indicators, selection.pi, weights, args.output)
    names = [f"z{j + 1}" for j in range(cohort.covariate_dim)]
    v = report.variance
    out.write(emit_fit_table(names, {
        "Estimate": report.beta_hat,
        "SE": v.se_total if v else None, "SE1": v.se1 if v else None, "SE2": v.se2 if v else None,
    }, args.format))
    print(f"phase-2 sample: {report.n_phase2} of {cohort.n}", file=sys.stderr)
    if report.separation_flag:
        raise SeparationError("perfect separation in the phase-2 fit; coefficients diverge")
    if not report.usable:
        print("warning: variance unavailable for this draw", file=sys.stderr)
    return 0


def _fit(args, out) -> int:
    cohort = parse_cohort_csv(args.input)
    rows = np.arange(cohort.n)
    w = np.ones(cohort.n)
    if args.selection:
        selected, _, weights = parse_selection_csv(args.selection, cohort.n)
        rows = np.flatnonzero(selected)
        w = weights
    if cohort.covariate_dim == 0:
        raise DataError("cohort has no model covariates z1..zK")
    data = SurvData(cohort.time[rows], cohort.event[rows], cohort.z[rows], w[rows])
    fit = fit_cox(data)
    if fit.separation_flag:
        raise SeparationError(
            f"perfect separation: coefficients ran to {np.array2string(fit.beta_hat, precision=2)} "
            f"after {fit.iterations} iterations with a monotone likelihood")
    if not fit.converged:
        raise SeparationError(f"Newton-Raphson did not converge in {fit.iterations} iterations")
    names = [f"z{j + 1}" for j in range(cohort.covariate_dim)]
    se = np.sqrt(np.diag(fit.information_inverse()))
    out.write(emit_fit_table(names, {"Estimate": fit.beta_hat, "SE": se}, args.format))
    return 0


def _calibrate(args, out) -> int:
    cohort = parse_cohort_csv(args.input)
    selected, pi, weights = parse_selection_csv(args.selection, cohort.n)
    aux = auxiliary_delta_betas(cohort)
    weights = weights.copy()
    flagged = False
    for label in np.unique(cohort.stratum):
        members = np.flatnonzero((cohort.stratum == label) & (pi < 1))
        picked = members[selected[members]]
        if picked.size == 0:
            continue
        x_s = np.column_stack([np.ones(picked.size), aux[picked]])
        targets = np.concatenate([[members.size], aux[members].sum(axis=0)])
        result = calibrate_weights(CalibrationSpec(weights[picked], x_s, targets))
        weights[picked] = result.weights
        flagged |= result.nonpositive
    if flagged:
        print("warning: calibration produced nonpositive weights", file=sys.stderr)
    write_selection_csv(cohort, selected, pi, weights, args.output or out)
    return 0


COMMANDS = {"simulate": _simulate, "sample": _sample, "fit": _fit, "calibrate": _calibrate}


def dispatch(args: argparse.Namespace, out=None) -> int:
    return COMMANDS[args.command](args, out or sys.stdout)


def main(argv: Sequence[str] | None = None, out=None) -> int:
    try:
        args = resolve(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except CasecubeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    try:
        return dispatch(args, out)
    except CasecubeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

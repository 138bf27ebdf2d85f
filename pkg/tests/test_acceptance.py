"""Acceptance criteria 1-12.

Each test records a one-line PASS/FAIL verdict with the measured numbers;
the lines are printed at the end of the pytest run, or directly when this
file is executed as a script.
"""

import io
import math
import subprocess
import sys
import time

import cvxpy as cp
import numpy as np
import pytest

from casecube.calibration import CalibrationSpec, calibrate_weights
from casecube.cli import main as cli_main
from casecube.cohort import SimCohortSpec, generate_cohort
from casecube.cox import SurvData, fit_cox, influence, log_partial_likelihood, score_and_information
from casecube.cube import BalancingProblem, cube_sample, fast_flight, landing_phase
from casecube.design import DesignSpec, run_design
from casecube.simulation import ExperimentConfig, compute_re, run_setup1, run_setup2
from casecube.variance import phase2_component
from oracles import grid_argmax, naive_loglik, naive_phase2

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script from elsewhere
    ACCEPTANCE_LINES = []

REPS = 500
LOG2 = math.log(2.0)


def verdict(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def setup1(n, censoring, designs, mode="subcohort_only", kind="continuous", seed=7):
    spec = SimCohortSpec(1000, (LOG2, 0.0), 0.8, censoring, kind)
    return run_setup1(ExperimentConfig("fixed", spec, n, designs, mode, REPS, seed))


def integer_sum_pi(rng, n, size):
    base = size / n
    noise = rng.uniform(-1.0, 1.0, n)
    noise -= noise.mean()
    return base + min(base, 1 - base) * 0.9 / np.abs(noise).max() * noise


def test_criterion_01_balance_exactness():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_drift = 0.0
    size_ok = True
    for _ in range(100):
        n = int(rng.integers(5, 201))
        p = int(rng.integers(1, 5))
        size = int(rng.integers(1, n))
        pi = integer_sum_pi(rng, n, size)
        problem = BalancingProblem.with_pi(pi, rng.normal(size=(n, p - 1)) if p > 1 else None)
        a = problem.design_matrix()
        target = a.T @ pi
        drift = [0.0]
        state = fast_flight(problem, rng, lambda probs, fixed: drift.append(
            float(np.max(np.abs(a.T @ probs - target) / np.maximum(np.abs(target), 1.0)))))
        sel = landing_phase(state, problem, rng)
        worst_drift = max(worst_drift, max(drift))
        size_ok &= sel.size == size
    elapsed = time.perf_counter() - start
    verdict(1, size_ok and worst_drift < 1e-8 and elapsed < 10,
            f"sizes exact={size_ok}, max flight drift {worst_drift:.1e} (<1e-8), {elapsed:.1f}s (<10s)")


def test_criterion_02_inclusion_unbiasedness():
    rng = np.random.default_rng(202)
    problem = BalancingProblem.with_pi(np.full(8, 0.5), rng.normal(size=(8, 1)))
    draws = 100_000
    start = time.perf_counter()
    counts = np.zeros(8)
    for _ in range(draws):
        counts += cube_sample(problem, rng).indicators
    elapsed = time.perf_counter() - start
    z = np.abs(counts / draws - 0.5) / math.sqrt(0.25 / draws)
    verdict(2, bool(np.all(z < 3)) and elapsed < 60,
            f"max |z| {z.max():.2f} (<3) over 8 units, {elapsed:.1f}s (<60s)")


def test_criterion_03_cox_oracles():
    closed = fit_cox(SurvData([1.0, 2.0, 3.0], [1, 1, 0], [1.0, 0.0, 1.0])).beta_hat[0]
    closed_err = abs(closed + 0.5 * LOG2)

    rng = np.random.default_rng(303)
    grid_err = fd_score = fd_info = 0.0
    done = 0
    while done < 20:
        n = int(rng.integers(4, 9))
        k = int(rng.integers(1, 3))
        times = rng.integers(1, 6, n).astype(float)
        events = rng.random(n) < 0.7
        events[0] = True
        data = SurvData(times, events, rng.normal(size=(n, k)), rng.uniform(0.5, 2.0, n))
        try:
            fit = fit_cox(data)
        except Exception:
            continue
        if fit.separation_flag or np.max(np.abs(fit.beta_hat)) > 5:
            continue
        f = lambda b: naive_loglik(data.times, data.events, data.covariates, b, data.weights)  # noqa: E731
        grid_err = max(grid_err, float(np.max(np.abs(grid_argmax(f, k) - fit.beta_hat))))

        beta = fit.beta_hat + rng.normal(scale=0.3, size=k)
        score, info = score_and_information(data, beta)
        h = 1e-5
        for j in range(k):
            e = np.eye(k)[j] * h
            num = (log_partial_likelihood(data, beta + e) - log_partial_likelihood(data, beta - e)) / (2 * h)
            fd_score = max(fd_score, abs(num - score[j]) / max(abs(score[j]), 1e-3))
            col = -(score_and_information(data, beta + e)[0] - score_and_information(data, beta - e)[0]) / (2 * h)
            fd_info = max(fd_info, float(np.max(np.abs(col - info[:, j]) / np.maximum(np.abs(info[:, j]), 1e-3))))
        done += 1
    ok = closed_err < 1e-5 and grid_err < 2e-3 and fd_score < 1e-6 and fd_info < 1e-4
    verdict(3, ok, f"closed form err {closed_err:.1e}, grid err {grid_err:.1e} (<2e-3), "
                   f"fd score {fd_score:.1e} (<1e-6), fd info {fd_info:.1e} (<1e-4)")


def test_criterion_04_delta_beta_fidelity():
    rng = np.random.default_rng(404)
    n = 50
    z = rng.normal(size=(n, 2))
    t = rng.exponential(size=n) / np.exp(z @ np.array([0.7, -0.4]))
    c = rng.exponential(scale=2.0, size=n)
    data = SurvData(np.minimum(t, c), t < c, z)
    fit = fit_cox(data)
    db = influence(data, fit).delta_betas
    loo = np.array([fit.beta_hat - fit_cox(data.subset(np.arange(n) != i)).beta_hat for i in range(n)])
    corr = [float(np.corrcoef(db[:, j], loo[:, j])[0, 1]) for j in range(2)]
    verdict(4, min(corr) > 0.95, f"delta-beta vs leave-one-out correlation {corr[0]:.4f}, {corr[1]:.4f} (>0.95)")


def test_criterion_05_calibration():
    rng = np.random.default_rng(505)
    worst_total = 0.0
    worst_qp = 0.0
    for i in range(100):
        n = int(rng.integers(6, 21)) if i < 20 else int(rng.integers(5, 300))
        q = int(rng.integers(1, 5))
        d = rng.uniform(1.0, 5.0, n)
        x = np.column_stack([np.ones(n), rng.normal(size=(n, q - 1))])
        targets = d @ x * rng.uniform(0.9, 1.1, q)
        spec = CalibrationSpec(d, x, targets)
        w = calibrate_weights(spec).weights
        worst_total = max(worst_total, float(np.max(np.abs(w @ x - targets) / np.maximum(np.abs(targets), 1.0))))
        if i < 20:
            v = cp.Variable(n)
            cp.Problem(cp.Minimize(cp.sum(cp.multiply(1.0 / d, cp.square(v - d)))), [x.T @ v == targets]).solve(
                solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
            worst_qp = max(worst_qp, float(np.max(np.abs(w - v.value))))
    verdict(5, worst_total < 1e-8 and worst_qp < 1e-6,
            f"max relative total error {worst_total:.1e} (<1e-8), max gap to QP oracle {worst_qp:.1e} (<1e-6)")


def test_criterion_06_variance_formula():
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(30):
        n = int(rng.integers(6, 51))
        p = int(rng.integers(1, 4))
        pi = rng.uniform(0.05, 0.95, n)
        x = np.column_stack([pi, rng.normal(size=(n, p - 1))])
        y = rng.normal(size=(n, 2))
        ours = phase2_component(pi, x, y)
        ref = naive_phase2(pi.tolist(), x.tolist(), y.tolist())
        worst = max(worst, float(np.max(np.abs(ours - ref)) / max(np.max(np.abs(ref)), 1.0)))
    cohort = generate_cohort(SimCohortSpec(300), np.random.default_rng(6))
    census = run_design(cohort, DesignSpec.census())[2].variance.phase2
    zero = bool(np.all(census == 0.0))
    verdict(6, worst < 1e-10 and zero, f"max deviation from direct summation {worst:.1e} (<1e-10), census V == 0: {zero}")


@pytest.mark.slow
def test_criterion_07_variance_reduction():
    start = time.perf_counter()
    res = setup1(100, 0.2, ("SRS", "BS"))
    elapsed = time.perf_counter() - start
    fc, srs, bs = res["FC"], res["SRS"], res["BS"]
    ratio = bs.sd[0] / srs.sd[0]
    bias = abs(bs.mean[0] - fc.mean[0])
    verdict(7, ratio < 0.9 and bias < 0.05 and elapsed < 600,
            f"SD(BS)/SD(SRS) = {bs.sd[0]:.4f}/{srs.sd[0]:.4f} = {ratio:.3f} (<0.9), "
            f"|Mean(BS) - FC| = {bias:.4f} (<0.05), {elapsed:.0f}s (<600s)")


@pytest.mark.slow
def test_criterion_08_se_calibration():
    bs = setup1(200, 0.2, ("BS",))["BS"]
    gap = abs(bs.se[0] - bs.sd[0]) / bs.sd[0]
    verdict(8, gap < 0.15, f"mean SE(BS) {bs.se[0]:.4f} vs SD(BS) {bs.sd[0]:.4f}, relative gap {gap:.3f} (<0.15)")


@pytest.mark.slow
def test_criterion_09_design_equivalence():
    res = setup1(200, 0.9, ("SRS", "BS", "CAL"), mode="case_cohort")
    srs, bs, cal = res["SRS"], res["BS"], res["CAL"]
    gap = abs(cal.sd[0] - bs.sd[0]) / bs.sd[0]
    verdict(9, gap < 0.15 and bs.re[0] < srs.re[0],
            f"|SD(CAL)-SD(BS)|/SD(BS) = |{cal.sd[0]:.4f}-{bs.sd[0]:.4f}|/{bs.sd[0]:.4f} = {gap:.3f} (<0.15), "
            f"RE(BS) {bs.re[0]:.4f} < RE(SRS) {srs.re[0]:.4f}; CAL excluded {cal.n_excluded}")


@pytest.mark.slow
def test_criterion_10_separation_bookkeeping():
    spec = SimCohortSpec(1000, (LOG2, 0.0), 0.8, 0.9, "binary")
    res = run_setup2(ExperimentConfig("random", spec, 100, ("SRS", "BS"), "subcohort_only", REPS, 7))
    srs, bs = res["SRS"], res["BS"]
    rate = (srs.n_excluded + bs.n_excluded) / (2 * REPS)
    verdict(10, 0.01 <= rate <= 0.08,
            f"exclusion rate {rate:.2%} in [1%, 8%] (SRS {srs.n_excluded}/{REPS}, BS {bs.n_excluded}/{REPS})")


def test_criterion_11_re_arithmetic():
    got = (round(compute_re(0.1246, 0.0410), 4), round(compute_re(0.3887, 0.0993), 4))
    verdict(11, got == (3.0390, 3.9144), f"compute_re gives {got[0]:.4f}, {got[1]:.4f} (3.0390, 3.9144)")


def test_criterion_12_determinism():
    argv = ["simulate", "--setup", "random", "--cohort-size", "400", "--subcohort-size", "60",
            "--designs", "srs,bs,cal,bsc,census", "--reps", "8", "--seed", "12"]
    outputs = []
    for _ in range(2):
        buf = io.StringIO()
        assert cli_main(argv, out=buf) == 0
        outputs.append(buf.getvalue().encode())
    proc = subprocess.run([sys.executable, "-m", "casecube.cli", *argv], capture_output=True, check=True,
                          env={"CASECUBE_WORKERS": "2", "PATH": ""})
    outputs.append(proc.stdout)
    same = len(set(outputs)) == 1
    verdict(12, same, f"two in-process runs and one 2-worker subprocess run byte-identical: {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))

import cvxpy as cp
import numpy as np
import pytest

from casecube.calibration import CalibrationSpec, calibrate_weights
from casecube.errors import DataError, RankDeficiencyError


def instance(rng, n, q):
    d = rng.uniform(1.0, 5.0, n)
    x = np.column_stack([np.ones(n), rng.normal(size=(n, q - 1))])
    targets = d @ x * rng.uniform(0.9, 1.1, q)
    return CalibrationSpec(d, x, targets)


def test_totals_are_hit(rng):
    for _ in range(50):
        spec = instance(rng, int(rng.integers(5, 200)), int(rng.integers(1, 5)))
        w = calibrate_weights(spec).weights
        assert np.allclose(w @ spec.x_sample, spec.targets, rtol=1e-8, atol=1e-8)


def test_matches_qp_oracle(rng):
    for _ in range(10):
        spec = instance(rng, int(rng.integers(6, 21)), 3)
        d, x = spec.design_weights, spec.x_sample
        w = cp.Variable(d.shape[0])
        prob = cp.Problem(cp.Minimize(cp.sum(cp.multiply(1.0 / d, cp.square(w - d)))),
                          [x.T @ w == spec.targets])
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
        ours = calibrate_weights(spec).weights
        assert np.allclose(ours, w.value, atol=1e-6)


def test_already_calibrated_weights_unchanged(rng):
    d = rng.uniform(1, 2, 30)
    x = np.column_stack([np.ones(30), rng.normal(size=30)])
    res = calibrate_weights(CalibrationSpec(d, x, d @ x))
    assert np.allclose(res.weights, d)
    assert np.allclose(res.multipliers, 0.0)


def test_nonpositive_weights_are_reported():
    d = np.ones(4)
    x = np.column_stack([np.ones(4), [0.0, 1.0, 2.0, 3.0]])
    res = calibrate_weights(CalibrationSpec(d, x, [4.0, 20.0]))
    assert res.nonpositive
    assert np.any(res.weights <= 0)


def test_singular_and_malformed_inputs():
    x = np.column_stack([np.ones(5), np.ones(5)])
    with pytest.raises(RankDeficiencyError):
        calibrate_weights(CalibrationSpec(np.ones(5), x, [5.0, 5.0]))
    with pytest.raises(RankDeficiencyError):
        CalibrationSpec(np.ones(1), np.ones((1, 2)), [1.0, 1.0])
    with pytest.raises(DataError):
        CalibrationSpec(np.ones(3), np.ones((3, 2)), [1.0])
    with pytest.raises(DataError):
        CalibrationSpec([1.0, 0.0, 1.0], np.ones((3, 1)), [3.0])

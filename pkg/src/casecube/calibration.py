"""Linear (chi-square distance) calibration of design weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, RankDeficiencyError


@dataclass(frozen=True, eq=False)
class CalibrationSpec:
    design_weights: np.ndarray
    x_sample: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.design_weights, dtype=float).reshape(-1)
        x = np.asarray(self.x_sample, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        t = np.asarray(self.targets, dtype=float).reshape(-1)
        if x.shape[0] != d.shape[0]:
            raise DataError("x_sample needs one row per design weight")
        if x.shape[1] != t.shape[0]:
            raise DataError(f"{x.shape[1]} calibration variables but {t.shape[0]} targets")
        if np.any(d <= 0):
            raise DataError("design weights must be positive")
        if d.shape[0] < x.shape[1]:
            raise RankDeficiencyError("fewer sample units than calibration variables")
        object.__setattr__(self, "design_weights", d)
        object.__setattr__(self, "x_sample", x)
        object.__setattr__(self, "targets", t)


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    weights: np.ndarray
    multipliers: np.ndarray
    nonpositive: bool


def calibrate_weights(spec: CalibrationSpec) -> CalibrationResult:
    """Closest weights to ``d`` in chi-square distance that hit the targets.

    ``w_i = d_i (1 + x_i' lam)`` where ``lam`` solves
    ``(sum d x x') lam = T - sum d x``. Nonpositive calibrated weights are
    reported through ``nonpositive`` and left as they are.
    """
    d, x = spec.design_weights, spec.x_sample
    gram = (x * d[:, None]).T @ x
    gap = spec.targets - d @ x
    scale = np.abs(gram).max() if gram.size else 0.0
    if scale == 0 or np.linalg.matrix_rank(gram, tol=1e-12 * scale) < gram.shape[0]:
        raise RankDeficiencyError("calibration system is singular")
    lam = np.linalg.solve(gram, gap)
    w = d * (1.0 + x @ lam)
    return CalibrationResult(w, lam, bool(np.any(w <= 0)))

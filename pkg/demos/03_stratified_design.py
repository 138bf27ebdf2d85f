"""Stratified case-cohort sampling on a synthetic cohort shaped like a
paediatric tumour registry.

Sixteen strata come from outcome, stage group, histology and age under one
year. Three large control strata are sampled (120, 160 and 120 subjects);
everybody else is taken. The cohort below is synthetic, built only to have
the right cell counts.
"""

# %%
import numpy as np

from casecube import Cohort, DesignSpec, build_nwts_strata, run_design
from casecube.design import NWTS_SAMPLED

rng = np.random.default_rng(11)
cases = [51, 238, 7, 211, 13, 43, 28, 78]
controls = [397, 1675, 28, 926, 11, 108, 2, 99]

rows = []
for event, counts in ((1, cases), (0, controls)):
    for cell, count in enumerate(counts):
        unfav, advanced, infant = cell // 4, (cell // 2) % 2, 1 - cell % 2
        for _ in range(count):
            stage = rng.choice([3, 4]) if advanced else rng.choice([1, 2])
            age = rng.uniform(0, 1) if infant else rng.uniform(1, 15)
            rows.append((event, unfav, stage, age))
rows = np.array(rows)
n = len(rows)

# event status is fixed by the cell counts; times are noise, so the
# coefficients only reflect how the table's cases spread over the cells
risk = 0.9 * rows[:, 1] + 0.5 * (rows[:, 2] >= 3)
time = rng.exponential(size=n) / np.exp(risk)
z = np.column_stack([rows[:, 1], rows[:, 2] >= 3]).astype(float)
cohort = Cohort(time, rows[:, 0].astype(bool), z, rows[:, [2, 1, 3]], np.zeros(n, dtype=int))

# %% strata and design
labels = build_nwts_strata(cohort)
cohort = cohort.with_strata(labels)
print("stratum sizes:", np.bincount(labels, minlength=16).tolist())

for kind in ("SRS", "BS", "BSc"):
    spec = DesignSpec.stratified(kind, NWTS_SAMPLED, labels)
    sel, weights, report = run_design(cohort, spec, np.random.default_rng(5))
    v = report.variance
    print(f"{kind:4s} phase-2 n={sel.size}  beta={np.round(report.beta_hat, 3)}  "
          f"SE={np.round(v.se_total, 3)}  SE2={np.round(v.se2, 3)}")

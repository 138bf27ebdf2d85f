"""A single balanced draw, next to a simple random sample.

Run with ``python demos/01_balanced_draw.py``.
"""

# %%
import numpy as np

from casecube import BalancingProblem, check_balance, cube_sample, srs_sample

rng = np.random.default_rng(2024)

# 500 units, want 50 of them. Two auxiliaries known for everyone.
N, n = 500, 50
age = rng.normal(60, 8, N)
dose = rng.gamma(2.0, 1.5, N)
pi = np.full(N, n / N)

# Balancing on pi itself fixes the sample size; the other columns are the
# totals we would like the sample to reproduce.
problem = BalancingProblem.with_pi(pi, np.column_stack([age, dose]))

# %% one draw of each kind
cube = cube_sample(problem, rng)
srs = srs_sample(N, n, rng)
print("cube sample size:", cube.size)
print("relative HT error  [size, age, dose]")
print("  cube:", np.array2string(check_balance(cube, problem), precision=5))
print("  srs: ", np.array2string(check_balance(srs, problem), precision=5))

# %% repeated draws: the cube keeps every unit's inclusion probability
draws = 2000
hits = np.zeros(N)
errs = []
for _ in range(draws):
    s = cube_sample(problem, rng)
    hits += s.indicators
    errs.append(np.abs(check_balance(s, problem)[1:]))
print(f"mean inclusion frequency {hits.mean() / draws:.4f} (target {n / N})")
print(f"worst unit frequency {np.abs(hits / draws - n / N).max():.4f} away from target")
print("mean |relative error| of age and dose totals:", np.array2string(np.mean(errs, axis=0), precision=5))

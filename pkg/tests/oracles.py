"""Slow, obviously-correct reference implementations used by the tests."""

import itertools

import numpy as np


def naive_loglik(times, events, z, beta, w=None):
    """Product-form weighted Breslow partial likelihood, one event at a time."""
    n = len(times)
    z = np.asarray(z, dtype=float).reshape(n, -1)
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    total = 0.0
    for i in range(n):
        if not events[i] or w[i] == 0:
            continue
        eta_i = float(z[i] @ beta)
        denom = 0.0
        for j in range(n):
            if times[j] >= times[i]:
                denom += w[j] * np.exp(float(z[j] @ beta))
        total += w[i] * (eta_i - np.log(denom))
    return total


def grid_argmax(f, k, lo=-6.0, hi=6.0, resolution=1e-3):
    """Coarse-to-fine grid search for the maximiser of a concave ``f`` on R^k."""
    step = 0.1
    axes = [np.arange(lo, hi + step / 2, step)] * k
    best = max(itertools.product(*axes), key=lambda b: f(np.array(b)))
    best = np.array(best)
    while step > resolution * 1.01:
        step /= 10
        axes = [np.arange(c - 10 * step, c + 10.5 * step, step) for c in best]
        best = np.array(max(itertools.product(*axes), key=lambda b: f(np.array(b))))
    return best


def naive_phase2(pi, x, y, n=None):
    """Direct double-sum version of the residual variance with explicit normal equations."""
    m, p = len(pi), len(x[0])
    k = len(y[0])
    n = m if n is None else n
    c = [n / (n - p) * (1 - pi[i]) for i in range(m)]
    xs = [[x[i][a] / pi[i] for a in range(p)] for i in range(m)]
    ys = [[y[i][b] / pi[i] for b in range(k)] for i in range(m)]
    gram = [[sum(c[i] * xs[i][a] * xs[i][b] for i in range(m)) for b in range(p)] for a in range(p)]
    cross = [[sum(c[i] * xs[i][a] * ys[i][b] for i in range(m)) for b in range(k)] for a in range(p)]
    coef = np.linalg.solve(np.array(gram), np.array(cross))
    v = np.zeros((k, k))
    for i in range(m):
        e = [ys[i][b] - sum(xs[i][a] * coef[a][b] for a in range(p)) for b in range(k)]
        for r in range(k):
            for s in range(k):
                v[r, s] += c[i] * e[r] * e[s]
    return v

"""Brute-force reference solutions shared by unit and acceptance tests."""

from __future__ import annotations

import numpy as np
from scipy.special import xlogy


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def bernoulli_ll(p, y) -> float:
    """Exact log-likelihood with 0 * log 0 = 0."""
    p = np.asarray(p, float)
    y = np.asarray(y, float)
    return float(np.sum(xlogy(y, p) + xlogy(1 - y, 1 - p)))


def isotonic_mle_enumeration(y, order):
    """Best order-feasible fit among all block-mean assignments.

    The constrained maximiser is constant on its level sets and equals the
    block mean there, so scanning every set partition finds it exactly.
    """
    y = np.asarray(y, float)
    n = len(y)
    ii, jj = np.nonzero(order)
    best, best_p = -np.inf, None
    for part in set_partitions(list(range(n))):
        p = np.empty(n)
        for block in part:
            p[block] = y[block].mean()
        if np.any(p[ii] > p[jj] + 1e-12):
            continue
        ll = bernoulli_ll(p, y)
        if ll > best:
            best, best_p = ll, p
    return best_p, best


def dense_grid_optimum(models, e2e_delay, theta, points_per_axis):
    """Minimum of sum(-log F_n) over a uniform grid of the delay simplex (N = 2 or 3)."""
    n = len(models)
    t = np.linspace(0.0, e2e_delay, points_per_axis)

    def nl(m, taus):
        return -np.log(np.clip(m.predict(taus, np.full(taus.shape, theta)), 1e-300, 1.0))

    if n == 2:
        f = nl(models[0], t) + nl(models[1], e2e_delay - t)
        k = int(np.argmin(f))
        return float(f[k]), np.array([t[k], e2e_delay - t[k]])
    if n == 3:
        a = nl(models[0], t)
        b = nl(models[1], t)
        best, arg = np.inf, None
        for i, t1 in enumerate(t):
            rest = e2e_delay - t1 - t[: points_per_axis - i]
            rest = np.maximum(rest, 0.0)
            f = a[i] + b[: points_per_axis - i] + nl(models[2], rest)
            j = int(np.argmin(f))
            if f[j] < best:
                best, arg = float(f[j]), np.array([t1, t[j], rest[j]])
        return best, arg
    raise ValueError("grid oracle supports 2 or 3 domains")

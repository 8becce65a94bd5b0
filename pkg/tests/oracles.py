"""Independent brute-force references used by the test suite."""

from __future__ import annotations

import itertools
import math

import numpy as np


def partial_corr_by_regression(returns: np.ndarray) -> np.ndarray:
    """Correlate residuals of p and q after least-squares regression of each
    on all remaining columns (plus an intercept)."""
    r = np.asarray(returns, dtype=np.float64)
    t, n = r.shape
    out = np.eye(n)
    for p, q in itertools.combinations(range(n), 2):
        rest = [k for k in range(n) if k not in (p, q)]
        design = np.column_stack([np.ones(t), r[:, rest]])
        res = []
        for k in (p, q):
            beta, *_ = np.linalg.lstsq(design, r[:, k], rcond=None)
            res.append(r[:, k] - design @ beta)
        a, b = res
        out[p, q] = out[q, p] = float(a @ b / math.sqrt((a @ a) * (b @ b)))
    return out


def floyd_warshall(adj: np.ndarray) -> np.ndarray:
    n = adj.shape[0]
    d = np.full((n, n), math.inf)
    d[adj.astype(bool)] = 1.0
    np.fill_diagonal(d, 0.0)
    for k in range(n):
        d = np.minimum(d, d[:, k, None] + d[None, k, :])
    return d


def path_length_oracle(adj: np.ndarray):
    """(l_bar, reachable fraction) from Floyd-Warshall distances, exact via
    integer sums."""
    d = floyd_warshall(adj)
    n = adj.shape[0]
    total = reach = 0
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j] != math.inf:
                total += int(d[i, j])
                reach += 1
    if reach == 0:
        return None, 0.0
    return total / reach, reach / (n * (n - 1) // 2)


def clustering_oracle(adj: np.ndarray) -> list[float]:
    """Per-node clustering by enumerating every triangle."""
    a = adj.astype(bool)
    n = a.shape[0]
    tri = [0] * n
    for i, j, k in itertools.combinations(range(n), 3):
        if a[i, j] and a[j, k] and a[i, k]:
            tri[i] += 1
            tri[j] += 1
            tri[k] += 1
    out = []
    for v in range(n):
        deg = int(a[v].sum())
        out.append(0.0 if deg < 2 else 2 * tri[v] / (deg * (deg - 1)))
    return out


def nearest_rank(values, pct: float) -> float:
    s = sorted(values)
    rank = max(1, math.ceil(pct / 100 * len(s) - 1e-12))
    return s[rank - 1]


def erdos_renyi(n: int, p: float, rng) -> np.ndarray:
    upper = np.triu(rng.random((n, n)) < p, 1)
    return upper | upper.T


def interior(x, frac: float = 0.1):
    k = int(len(x) * frac)
    return x[k:len(x) - k]

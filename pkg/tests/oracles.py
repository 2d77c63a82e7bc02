"""Brute-force reference implementations, deliberately independent of isoprobe's code paths."""

import itertools
import math

import mpmath
import numpy as np


def naive_eigvectors(m):
    """Eigenvectors of the divisor-N covariance via the general (non-symmetric) solver."""
    m = np.asarray(m, dtype=float)
    c = m - m.mean(axis=0)
    cov = np.cov(c.T, bias=True).reshape(m.shape[1], m.shape[1])
    values, vectors = np.linalg.eig(cov)
    vectors = np.real(vectors)
    vectors /= np.linalg.norm(vectors, axis=0)
    return np.real(values), vectors.T


def naive_isotropy(m):
    """min/max of sum_i exp(u . w_i) over +-eigenvectors, summed term by term in float."""
    m = np.asarray(m, dtype=float)
    _, vectors = naive_eigvectors(m)
    values = []
    for u in vectors:
        for sign in (1.0, -1.0):
            values.append(sum(math.exp(sign * float(np.dot(u, w))) for w in m))
    return min(values) / max(values)


def mp_log_partition(u, m, dps=50):
    with mpmath.workdps(dps):
        return mpmath.log(mpmath.fsum(mpmath.exp(mpmath.mpf(float(np.dot(u, w)))) for w in m))


def mp_isotropy_logs(m, dps=50):
    """High-range oracle: (log F_min, log F_max) in arbitrary precision."""
    _, vectors = naive_eigvectors(m)
    logs = []
    for u in vectors:
        logs.append(mp_log_partition(u, m, dps))
        logs.append(mp_log_partition(-u, m, dps))
    return min(logs), max(logs)


def brute_ranks(x):
    """Average rank of each element: 1 + (#smaller) + (#equal - 1) / 2."""
    x = list(x)
    return [1 + sum(v < xi for v in x) + (sum(v == xi for v in x) - 1) / 2 for xi in x]


def brute_spearman(x, y):
    rx, ry = brute_ranks(x), brute_ranks(y)
    n = len(rx)
    mx, my = sum(rx) / n, sum(ry) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    return sxy / math.sqrt(sxx * syy)


def best_partition(points, k):
    """Exhaustive minimum-SSE partition of ``points`` into k non-empty groups."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    best = (math.inf, None)
    for labels in itertools.product(range(k), repeat=n):
        if len(set(labels)) != k:
            continue
        sse = 0.0
        for c in range(k):
            grp = points[[i for i in range(n) if labels[i] == c]]
            sse += float(((grp - grp.mean(axis=0)) ** 2).sum())
        if sse < best[0] - 1e-12:
            best = (sse, labels)
    return best


def canonical_partition(labels):
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return sorted(tuple(g) for g in groups.values())

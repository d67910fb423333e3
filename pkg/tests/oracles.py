"""Slow, independent reference implementations used as test oracles.

Nothing here imports from clinact.
"""
from __future__ import annotations

import itertools
import math

import mpmath


def brute_force_viterbi(logB, logA, logPi):
    """Enumerate every path; return (best_path, best_score).

    Among equal scores the path that is smallest when read from the last
    frame backwards wins. That is what a backpointer DP produces when every
    argmax takes the lowest index.
    """
    T, L = len(logB), len(logB[0])
    best, best_path = -math.inf, None
    for path in itertools.product(range(L), repeat=T):
        s = logPi[path[0]] + logB[0][path[0]]
        for t in range(1, T):
            s += logA[path[t - 1]][path[t]] + logB[t][path[t]]
        if s > best or (s == best and path[::-1] < best_path[::-1]):
            best, best_path = s, path
    return list(best_path), best


def average_ranks(values):
    """1-based ranks with ties averaged, O(n^2)."""
    out = []
    for v in values:
        less = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        out.append(less + (equal + 1) / 2.0)
    return out


def pearson_textbook(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def spearman_bruteforce(x, y):
    return pearson_textbook(average_ranks(x), average_ranks(y))


def t_two_sided_p(r, df):
    """Two-sided p from Student-t via the regularized incomplete beta (mpmath)."""
    if abs(r) >= 1:
        return 0.0
    t = r * math.sqrt(df / (1 - r * r))
    x = df / (df + t * t)
    with mpmath.workdps(40):
        return float(mpmath.betainc(df / 2.0, 0.5, 0, x, regularized=True))


def ols_residuals(y, columns):
    """Residuals of y regressed on [1, columns...] via normal equations (Gauss-Jordan)."""
    n = len(y)
    X = [[1.0] + [c[i] for c in columns] for i in range(n)]
    p = len(X[0])
    XtX = [[math.fsum(X[k][i] * X[k][j] for k in range(n)) for j in range(p)] for i in range(p)]
    Xty = [math.fsum(X[k][i] * y[k] for k in range(n)) for i in range(p)]
    M = [row[:] + [b] for row, b in zip(XtX, Xty)]
    for c in range(p):
        piv = max(range(c, p), key=lambda r: abs(M[r][c]))
        M[c], M[piv] = M[piv], M[c]
        for r in range(p):
            if r != c:
                f = M[r][c] / M[c][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    beta = [M[i][p] / M[i][i] for i in range(p)]
    return [y[k] - math.fsum(b * xv for b, xv in zip(beta, X[k])) for k in range(n)]


def partial_spearman_bruteforce(x, y, controls):
    rc = [average_ranks(c) for c in controls]
    ex = ols_residuals(average_ranks(x), rc)
    ey = ols_residuals(average_ranks(y), rc)
    return pearson_textbook(ex, ey)


def kmeans_optimal_partition_cost(points, k):
    """Minimum within-cluster sum of squares over every assignment (tiny inputs only)."""
    n = len(points)
    best = math.inf
    best_centers = None
    for assign in itertools.product(range(k), repeat=n):
        if len(set(assign)) != k:
            continue
        cost, centers = 0.0, []
        for j in range(k):
            members = [points[i] for i in range(n) if assign[i] == j]
            c = [sum(col) / len(members) for col in zip(*members)]
            centers.append(c)
            cost += sum(sum((a - b) ** 2 for a, b in zip(m, c)) for m in members)
        if cost < best:
            best, best_centers = cost, centers
    return best, best_centers

"""Rectangular linear assignment (Hungarian / shortest augmenting path).

The solver works on n <= m cost matrices in O(n^2 m) and also returns dual
potentials.  The duals let :func:`hungarian_round` break ties toward the
lexicographically smallest optimum cheaply: a pair with positive reduced
cost can never appear in any optimal assignment, so only genuinely tied
alternatives need an exact re-solve.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ValidationError
from .base import HardMatch, SoftMatch


def solve_min_cost(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-cost assignment of every row to a distinct column.

    Returns ``(cols, u, v)``: the column chosen for each row and potentials
    with ``u[i] + v[j] <= cost[i, j]``, equality on chosen pairs, and
    ``v[j] <= 0`` (zero on unused columns).
    """
    c = np.asarray(cost, dtype=np.float64)
    n, m = c.shape
    if n > m:
        raise ValidationError(f"need rows <= columns, got {n} x {m}")
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(m)
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)      # p[j]: row (1-based) owning column j
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = c[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            cols_used = np.flatnonzero(used)
            u[p[cols_used]] += delta
            v[cols_used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    cols = np.zeros(n, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            cols[p[j] - 1] = j - 1
    return cols, u[1:], v[1:]


def _tie_tol(cost: np.ndarray) -> float:
    scale = float(np.max(np.abs(cost))) if cost.size else 1.0
    return 1e-12 * max(1.0, scale) * max(1, cost.shape[0])


def lexicographic_min_cost(cost: np.ndarray) -> np.ndarray:
    """Optimal assignment that is lexicographically smallest among all optima."""
    c = np.asarray(cost, dtype=np.float64)
    n, m = c.shape
    cols, u, v = solve_min_cost(c)
    if n == 0:
        return cols
    best = math.fsum(c[np.arange(n), cols].tolist())
    tol = _tie_tol(c)
    reduced = c - u[:, None] - v[None, :]
    cols = cols.copy()
    for i in range(n):
        fixed = set(cols[:i].tolist())
        for cand in range(int(cols[i])):
            if cand in fixed or reduced[i, cand] > tol:
                continue
            rest_rows = np.arange(i + 1, n)
            taken = fixed | {cand}
            rest_cols = np.array([j for j in range(m) if j not in taken], dtype=np.int64)
            sub_cols, _, _ = solve_min_cost(c[np.ix_(rest_rows, rest_cols)])
            trial = np.concatenate([cols[:i], [cand], rest_cols[sub_cols]]).astype(np.int64)
            total = math.fsum(c[np.arange(n), trial].tolist())
            if total <= best + tol:
                cols = trial
                break
    return cols


def hungarian_round(s: SoftMatch, K=None) -> HardMatch:
    """Maximum-weight injective assignment of rows of ``s`` to columns.

    The objective is the QAP value under ``K`` when an affinity matrix is
    supplied, otherwise the summed soft weight of the chosen cells.
    """
    w = s.scores
    if w.shape[0] > w.shape[1]:
        raise ValidationError(f"soft match has more rows than columns: {w.shape}")
    cols = lexicographic_min_cost(-w)
    assignment = {i: int(a) for i, a in enumerate(cols.tolist())}
    if K is not None:
        objective = K.objective(assignment)
    else:
        objective = math.fsum(w[np.arange(w.shape[0]), cols].tolist())
    return HardMatch(assignment, objective)

"""Rectangular minimum-cost assignment with forbidden pairs (Hungarian method)."""

from __future__ import annotations

import numpy as np

FORBIDDEN = np.inf


def _hungarian(a: np.ndarray) -> np.ndarray:
    """Row -> column optimal assignment for an n x m matrix with n <= m.

    Shortest augmenting path formulation with row/column potentials; every
    row is assigned. Returns ``col_of_row``.
    """
    n, m = a.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j] = 1-based row matched to column j
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            reduced = a[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def solve_assignment(costs) -> list:
    """Optimal (row, col) pairs for a cost matrix that may contain FORBIDDEN.

    Among matchings that use the largest possible number of allowed entries,
    the one with the smallest total cost is returned. Forbidden entries are
    priced above the sum of every finite cost so no optimal solution trades an
    allowed pair for a forbidden one, then stripped from the result.
    """
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2:
        if c.size == 0:
            return []
        raise ValueError(f"cost matrix must be 2D, got shape {c.shape}")
    rows, cols = c.shape
    if rows == 0 or cols == 0:
        return []
    allowed = np.isfinite(c)
    if np.any(c[allowed] < 0):
        raise ValueError("costs must be non-negative")
    if np.isnan(c).any():
        raise ValueError("costs must not be NaN")
    if not allowed.any():
        return []
    big = float(c[allowed].sum()) + 1.0
    work = np.where(allowed, c, big)
    if rows <= cols:
        col_of_row = _hungarian(work)
        pairs = [(r, int(col_of_row[r])) for r in range(rows)]
    else:
        row_of_col = _hungarian(work.T)
        pairs = [(int(row_of_col[k]), k) for k in range(cols)]
    return sorted((r, k) for r, k in pairs if allowed[r, k])


def assignment_cost(costs, pairs) -> float:
    c = np.asarray(costs, dtype=np.float64)
    return float(sum(c[r, k] for r, k in pairs))

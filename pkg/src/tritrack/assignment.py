"""Minimum-cost assignment via shortest augmenting paths.

Solves the rectangular linear assignment problem: given an (n, m) cost
matrix, pick min(n, m) entries with no shared row or column minimizing the
total cost. Classic Jonker-Volgenant style potentials, O(n^2 * m).

Ties are broken deterministically toward the lowest row index, then the
lowest column index, so repeated runs on equal-cost problems always return
an identical matching.
"""
from __future__ import annotations

import numpy as np

from .errors import DataError


def hungarian(cost) -> list:
    """Optimal assignment as ``[(row, col), ...]`` sorted by row.

    Accepts any finite real matrix, negative entries included (a constant
    shift keeps the optimum unchanged at fixed cardinality). An empty
    matrix yields an empty matching.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise DataError(f"cost must be a matrix, got shape {cost.shape}")
    n, m = cost.shape
    if n == 0 or m == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise DataError("cost matrix contains non-finite entries")
    if n > m:
        flipped = hungarian(cost.T)
        return sorted((r, c) for c, r in flipped)
    low = cost.min()
    work = cost - low if low < 0 else cost
    col_of_row = _solve_rows(work)
    return [(int(r), int(c)) for r, c in enumerate(col_of_row)]


def _solve_rows(a: np.ndarray) -> np.ndarray:
    """Assign every row of a non-negative (n, m) matrix, n <= m.

    Rows are inserted one at a time; each insertion grows the matching by
    one along a shortest augmenting path found with dual potentials u, v.
    """
    n, m = a.shape
    inf = np.inf
    u = np.zeros(n)
    v = np.zeros(m + 1)
    # row currently assigned to each column; m is a virtual start column
    row_of = np.full(m + 1, -1, dtype=np.int64)
    for i in range(n):
        row_of[m] = i
        j_cur = m
        min_to = np.full(m, inf)
        prev = np.full(m, m, dtype=np.int64)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j_cur] = True
            i_cur = row_of[j_cur]
            delta = inf
            j_next = -1
            reduced = a[i_cur] - u[i_cur] - v[:m]
            for j in range(m):
                if used[j]:
                    continue
                if reduced[j] < min_to[j]:
                    min_to[j] = reduced[j]
                    prev[j] = j_cur
                if min_to[j] < delta:
                    delta = min_to[j]
                    j_next = j
            for j in range(m + 1):
                if used[j]:
                    if row_of[j] >= 0:
                        u[row_of[j]] += delta
                    v[j] -= delta
                elif j < m:
                    min_to[j] -= delta
            j_cur = j_next
            if row_of[j_cur] < 0:
                break
        # walk the alternating path back, flipping assignments
        while j_cur != m:
            j_prev = prev[j_cur]
            row_of[j_cur] = row_of[j_prev]
            j_cur = j_prev
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(m):
        if row_of[j] >= 0:
            col_of_row[row_of[j]] = j
    return col_of_row


def assignment_cost(cost, matching) -> float:
    """Total cost of a matching produced by :func:`hungarian`."""
    cost = np.asarray(cost, dtype=np.float64)
    return float(sum(cost[r, c] for r, c in matching))

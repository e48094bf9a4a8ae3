"""Rectangular linear assignment with forbidden cells.

Shortest-augmenting-path Hungarian method on a square padding of the cost
matrix, followed by a refinement pass that picks the lexicographically
smallest (row, col) list among all optimal assignments.
"""
from __future__ import annotations

from collections import deque

import numpy as np

FORBIDDEN = np.inf


class InfeasibleAssignment(ValueError):
    """A square cost matrix has a row or column with no allowed cell."""


def _hungarian(a):
    """Min-cost perfect matching of a square matrix; returns (col_of_row, u, v)."""
    n = a.shape[0]
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j] = row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = a[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
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
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _lexicographic(tight, col_of_row, n_rows, rank):
    """Re-route a perfect matching on the tight graph so that rows
    ``0..n_rows-1`` take the best feasible columns in order, where ``rank``
    orders candidate cells (real allowed cells before the rest)."""
    n = tight.shape[0]
    row_of_col = np.empty(n, dtype=np.int64)
    row_of_col[col_of_row] = np.arange(n)
    for i in range(n_rows):
        cand = np.flatnonzero(tight[i])
        for j in cand[np.lexsort((cand, rank[i, cand]))]:
            if col_of_row[i] == j:
                break
            target = col_of_row[i]
            r0 = row_of_col[j]
            if r0 < i:
                continue
            # alternating path from r0 to the column that i releases,
            # through rows > i only (rows < i are fixed, row i is moving)
            prev = {r0: None}
            queue = deque([r0])
            found = None
            while queue and found is None:
                r = queue.popleft()
                for c in np.flatnonzero(tight[r]):
                    if c == j:
                        continue
                    if c == target:
                        found = (r, c)
                        break
                    r2 = row_of_col[c]
                    if r2 > i and r2 not in prev:
                        prev[r2] = (r, c)
                        queue.append(r2)
            if found is None:
                continue
            r, c = found
            while r is not None:
                col_of_row[r] = c
                row_of_col[c] = r
                r, c = prev[r] or (None, None)
            col_of_row[i] = j
            row_of_col[j] = i
            break
    return col_of_row


def solve_assignment(cost):
    """Minimum-cost assignment of ``min(rows, cols)`` pairs.

    ``FORBIDDEN`` (``inf``) cells are never returned, so fewer pairs come back
    when the allowed cells cannot cover every row or column. Among optimal
    assignments the lexicographically smallest sorted (row, col) list wins.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if np.isnan(c).any() or (c == -np.inf).any():
        raise ValueError("cost entries must be finite or FORBIDDEN")
    n_r, n_c = c.shape
    if n_r == 0 or n_c == 0:
        return []
    allowed = np.isfinite(c)
    if n_r == n_c and (not allowed.any(axis=1).all() or not allowed.any(axis=0).all()):
        raise InfeasibleAssignment("a row or column has only FORBIDDEN entries")
    finite = c[allowed]
    n = max(n_r, n_c)
    scale = float(np.abs(finite).max()) if finite.size else 0.0
    # any assignment with one fewer forbidden cell is cheaper than all others
    big = (2.0 * scale + 1.0) * (n + 1)
    a = np.zeros((n, n))
    a[:n_r, :n_c] = np.where(allowed, c, big)
    col_of_row, u, v = _hungarian(a)
    tol = 1e-9 * (1.0 + scale)
    tight = np.abs(a - u[:, None] - v[None, :]) <= tol * (n + 1)
    rank = np.ones((n, n), dtype=np.int64)
    rank[:n_r, :n_c][allowed] = 0
    col_of_row = _lexicographic(tight, col_of_row, n_r, rank)
    return [(i, int(col_of_row[i])) for i in range(n_r)
            if col_of_row[i] < n_c and allowed[i, col_of_row[i]]]


def assignment_cost(cost, pairs):
    c = np.asarray(cost, dtype=float)
    return float(sum(c[i, j] for i, j in pairs))

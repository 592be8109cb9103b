"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Solves ``max c @ x  s.t.  A @ x = b, x >= 0`` for the small LPs that appear
in occupancy-measure formulations (a few hundred columns at most). Duals are
recovered from the final basis, and infeasible problems come back with a
Farkas certificate instead of raising.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    basis: list[int]
    # y with y @ A <= 0 and y @ b > 0 when infeasible
    certificate: np.ndarray | None = None
    # artificial values at the end of phase one (per row)
    infeasibility: np.ndarray | None = None
    iterations: int = 0


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factor = T[:, col].copy()
    factor[row] = 0.0
    T -= np.outer(factor, T[row])


def _run(T: np.ndarray, basis: list[int], n_cols: int, tol: float, max_iter: int) -> tuple[str, int]:
    """Maximize with tableau ``T``: rows 0..m-1 are constraints with the rhs in
    the last column, row m holds reduced costs (c_j - z_j). Only the first
    ``n_cols`` columns may enter."""
    m = T.shape[0] - 1
    for it in range(max_iter):
        red = T[m, :n_cols]
        entering = np.flatnonzero(red > tol)
        if entering.size == 0:
            return OPTIMAL, it
        col = int(entering[0])
        column = T[:m, col]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
    raise RuntimeError(f"simplex did not terminate in {max_iter} pivots")


def solve_standard_form(c, A, b, tol: float = 1e-10, max_iter: int = 50_000) -> SimplexResult:
    """Maximize ``c @ x`` subject to ``A @ x = b`` and ``x >= 0``."""
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    sign = np.where(neg, -1.0, 1.0)

    # Phase one: artificials n..n+m-1 form the starting basis.
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = A.sum(axis=0)
    T[m, -1] = b.sum()
    basis = list(range(n, n + m))
    _, it1 = _run(T, basis, n, tol, max_iter)

    art = np.zeros(m)
    for r, j in enumerate(basis):
        if j >= n:
            art[j - n] = T[r, -1]
    scale = max(1.0, np.abs(b).max(initial=0.0))
    if art.sum() > 1e-9 * scale:
        B = np.column_stack([A[:, j] if j < n else np.eye(m)[:, j - n] for j in basis])
        cb = np.array([0.0 if j < n else -1.0 for j in basis])
        y1 = np.linalg.solve(B.T, cb)
        return SimplexResult(
            INFEASIBLE, None, float("nan"), None, basis,
            certificate=-y1 * sign, infeasibility=art, iterations=it1,
        )

    # Drive zero-level artificials out of the basis; drop redundant rows.
    keep = []
    for r in range(m):
        if basis[r] < n:
            keep.append(r)
            continue
        cand = np.flatnonzero(np.abs(T[r, :n]) > tol)
        if cand.size:
            _pivot(T, r, int(cand[0]))
            basis[r] = int(cand[0])
            keep.append(r)
    rows = keep
    T2 = np.zeros((len(rows) + 1, n + 1))
    T2[:-1, :n] = T[rows, :n]
    T2[:-1, -1] = T[rows, -1]
    basis2 = [basis[r] for r in rows]
    T2[-1, :n] = c
    for r, j in enumerate(basis2):
        T2[-1] -= c[j] * T2[r]
    status, it2 = _run(T2, basis2, n, tol, max_iter)
    if status == UNBOUNDED:
        return SimplexResult(UNBOUNDED, None, float("inf"), None, basis2, iterations=it1 + it2)

    # Recompute primal and dual from the basis matrix for accuracy.
    Ar, br = A[rows], b[rows]
    B = Ar[:, basis2]
    xb = np.linalg.solve(B, br)
    x = np.zeros(n)
    x[basis2] = np.clip(xb, 0.0, None)
    y_rows = np.linalg.solve(B.T, c[basis2])
    y = np.zeros(m)
    y[rows] = y_rows
    return SimplexResult(
        OPTIMAL, x, float(c @ x), y * sign, basis2, iterations=it1 + it2,
    )

"""Sparse assembly containers and the direct solver used for every time step.

Storage is ``scipy.sparse.csr_matrix`` in canonical form (sorted column
indices, duplicates summed); the factorization is SuperLU with partial
pivoting and a fill-reducing column ordering.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import SolverError

CsrMatrix = sps.csr_matrix


class CooAccumulator:
    """Triplet buffer; duplicate (row, col) pairs are summed on conversion."""

    def __init__(self, shape: tuple[int, int]):
        self.shape = (int(shape[0]), int(shape[1]))
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, values) -> None:
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (len(rows) == len(cols) == len(values)):
            raise ValueError("triplet arrays differ in length")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(values)

    def add_local(self, row_dofs: np.ndarray, col_dofs: np.ndarray, local: np.ndarray) -> None:
        """Scatter element matrices ``local[t, i, j]`` to (row_dofs[t, i], col_dofs[t, j])."""
        nr, nc = row_dofs.shape[1], col_dofs.shape[1]
        rows = np.repeat(row_dofs, nc, axis=1)
        cols = np.tile(col_dofs, (1, nr))
        self.add(rows, cols, local.reshape(len(local), nr * nc))

    def merge(self, other: "CooAccumulator") -> None:
        if other.shape != self.shape:
            raise ValueError("cannot merge accumulators of different shape")
        self._rows += other._rows
        self._cols += other._cols
        self._vals += other._vals

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._rows:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        return np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._vals)


def coo_to_csr(acc: CooAccumulator) -> CsrMatrix:
    rows, cols, vals = acc.triplets()
    m, n = acc.shape
    if len(rows) and (rows.min() < 0 or rows.max() >= m or cols.min() < 0 or cols.max() >= n):
        raise IndexError(f"triplet index outside {acc.shape}")
    mat = sps.coo_matrix((vals, (rows, cols)), shape=acc.shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


class LinearSolver:
    """Reusable LU factorization of a square sparse matrix.

    The factorized matrix is ``diag(row_scale) A diag(col_scale)``.
    """

    def __init__(self, lu, shape: tuple[int, int], row_scale=None, col_scale=None):
        self._lu = lu
        self.shape = shape
        self.row_scale = row_scale
        self.col_scale = col_scale

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise SolverError(f"right-hand side has length {b.shape[0]}, expected {self.shape[0]}")
        if self.row_scale is None:
            return self._lu.solve(b)
        y = self._lu.solve(b * self.row_scale if b.ndim == 1 else b * self.row_scale[:, None])
        return y * self.col_scale if y.ndim == 1 else y * self.col_scale[:, None]


def equilibration(A) -> tuple[np.ndarray, np.ndarray]:
    """Power-of-two row and column scales bringing max |entries| near 1.

    Rows are scaled first, then columns of the row-scaled matrix.  Powers of
    two keep the scaling itself exact.
    """
    A = sps.csr_matrix(A)
    absA = abs(A)
    rmax = absA.max(axis=1).toarray().ravel()
    r = np.where(rmax > 0, np.exp2(-np.round(np.log2(np.where(rmax > 0, rmax, 1.0)))), 1.0)
    cmax = (sps.diags(r) @ absA).max(axis=0).toarray().ravel()
    c = np.where(cmax > 0, np.exp2(-np.round(np.log2(np.where(cmax > 0, cmax, 1.0)))), 1.0)
    return r, c


# min/max |pivot| below this flags an equilibrated matrix as numerically singular
PIVOT_RATIO_TOL = 1e-11


def factorize(A, equilibrate: bool = True) -> LinearSolver:
    """SuperLU factorization, optionally of the equilibrated matrix.

    Raises SolverError on exact singularity and, for equilibrated matrices,
    when the pivot ratio falls below ``PIVOT_RATIO_TOL``.
    """
    A = sps.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise SolverError(f"matrix is not square: {A.shape}")
    if not np.all(np.isfinite(A.data)):
        raise SolverError("matrix contains non-finite entries")
    r = c = None
    if equilibrate:
        r, c = equilibration(A)
        A = sps.csc_matrix(sps.diags(r) @ A @ sps.diags(c))
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        # SuperLU reports "Factor is exactly singular" without the pivot index;
        # locate an empty row/column if there is one.
        empty_rows = np.flatnonzero(np.diff(sps.csr_matrix(A).indptr) == 0)
        empty_cols = np.flatnonzero(np.diff(A.indptr) == 0)
        where = ""
        if len(empty_rows):
            where = f" (row {empty_rows[0]} is empty)"
        elif len(empty_cols):
            where = f" (column {empty_cols[0]} is empty)"
        raise SolverError(f"LU factorization failed: {exc}{where}") from exc
    diag = np.abs(lu.U.diagonal())
    if diag.size and diag.min() == 0.0:
        raise SolverError(f"zero pivot at position {int(np.argmin(diag))}")
    if equilibrate and diag.size and diag.min() < PIVOT_RATIO_TOL * diag.max():
        raise SolverError(
            f"matrix is numerically singular (pivot ratio {diag.min() / diag.max():.1e}"
            f" at position {int(np.argmin(diag))}); check the boundary conditions"
        )
    return LinearSolver(lu, A.shape, r, c)


def solve(s: LinearSolver, b) -> np.ndarray:
    return s.solve(b)

"""Compressed sparse row matrices and sparse-times-dense products.

The CSR container is a frozen value type; the heavy products are delegated
to scipy's CSR kernels. Tests check them against plain densify-and-multiply
loops, so the delegation is an implementation detail.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class SparseMatrix:
    """A rows x cols float64 matrix in compressed sparse row form.

    Parameters
    ----------
    rows, cols : int
        Matrix shape.
    row_offsets : ndarray of int64, shape (rows + 1,)
        Non-decreasing entry offsets; row_offsets[0] == 0 and
        row_offsets[-1] == nnz.
    col_indices : ndarray of int64, shape (nnz,)
        Column index per stored entry, strictly increasing within each row.
    values : ndarray of float64, shape (nnz,)
        Stored entry values, all finite.
    """

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.ascontiguousarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.ascontiguousarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        self._validate()

    def _validate(self):
        if self.rows < 0 or self.cols < 0:
            raise ValueError("matrix shape must be non-negative")
        off = self.row_offsets
        if off.shape != (self.rows + 1,):
            raise ValueError(f"row_offsets must have length rows+1, got {off.shape[0]} for {self.rows} rows")
        if off[0] != 0:
            raise ValueError("row_offsets must start at 0")
        if np.any(np.diff(off) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        nnz = int(off[-1])
        if self.col_indices.shape != (nnz,) or self.values.shape != (nnz,):
            raise ValueError("col_indices and values must both have length row_offsets[-1]")
        if nnz and (self.col_indices.min() < 0 or self.col_indices.max() >= self.cols):
            raise ValueError("column index out of range")
        if nnz > 1:
            # strict increase may only break where a new row starts
            starts = np.zeros(nnz, dtype=bool)
            inner = off[1:-1]
            starts[inner[inner < nnz]] = True
            if np.any((np.diff(self.col_indices) <= 0) & ~starts[1:]):
                raise ValueError("col_indices must be strictly increasing within each row")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        m = sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.rows, self.cols),
        )
        return m

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @classmethod
    def from_pairs(cls, rows: int, cols: int, row_idx, col_idx, values=None) -> "SparseMatrix":
        """Build a CSR matrix from coordinate pairs; duplicates are an error."""
        row_idx = np.asarray(row_idx, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        if row_idx.shape != col_idx.shape or row_idx.ndim != 1:
            raise ValueError("row_idx and col_idx must be 1-D and equally long")
        if values is None:
            values = np.ones(row_idx.shape[0], dtype=np.float64)
        else:
            values = np.asarray(values, dtype=np.float64)
            if values.shape != row_idx.shape:
                raise ValueError("values must match the pair count")
        if row_idx.size:
            if row_idx.min() < 0 or row_idx.max() >= rows:
                raise ValueError("row index out of range")
            if col_idx.min() < 0 or col_idx.max() >= cols:
                raise ValueError("column index out of range")
        order = np.lexsort((col_idx, row_idx))
        row_idx, col_idx, values = row_idx[order], col_idx[order], values[order]
        same = (np.diff(row_idx) == 0) & (np.diff(col_idx) == 0)
        if np.any(same):
            raise ValueError("duplicate coordinate pair")
        offsets = np.zeros(rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(row_idx, minlength=rows), out=offsets[1:])
        return cls(rows, cols, offsets, col_idx, values)

    def row_ids(self) -> np.ndarray:
        """Row index per stored entry, aligned with col_indices/values."""
        return np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.row_offsets))

    def select(self, keep: np.ndarray, scale: float = 1.0) -> "SparseMatrix":
        """Matrix restricted to entries where keep is True, values scaled."""
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != (self.nnz,):
            raise ValueError("keep mask must have one flag per stored entry")
        rows_kept = self.row_ids()[keep]
        offsets = np.zeros(self.rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows_kept, minlength=self.rows), out=offsets[1:])
        return SparseMatrix(self.rows, self.cols, offsets, self.col_indices[keep], self.values[keep] * scale)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=np.float64)
        out[self.row_ids(), self.col_indices] = self.values
        return out

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def col_nnz(self) -> np.ndarray:
        return np.bincount(self.col_indices, minlength=self.cols)


def spmm(a: SparseMatrix, b: np.ndarray) -> np.ndarray:
    """Dense product a @ b for a sparse a and a dense (a.cols, d) array b."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != a.cols:
        raise ValueError(f"operand shape {b.shape} does not match {a.rows}x{a.cols} @ (cols, d)")
    return np.asarray(a._csr @ b)


def spmm_t(a: SparseMatrix, b: np.ndarray) -> np.ndarray:
    """Dense product a.T @ b for a sparse a and a dense (a.rows, d) array b."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] != a.rows:
        raise ValueError(f"operand shape {b.shape} does not match transpose of {a.rows}x{a.cols} @ (rows, d)")
    return np.asarray(a._csr.T @ b)

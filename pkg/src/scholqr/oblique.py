"""QR factorization in the inner product ``(x, y)_B = x^T B y``.

The metric ``B`` may be the identity, a dense SPD array, or a CSR sparse
matrix read from a Matrix Market file. All Gram products accumulate in a
fixed order, so results do not depend on the column block size used to form
``B X``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cholqr import (
    NORM_INFLATION,
    SAFE,
    QrOutcome,
    ShiftMode,
    ShiftPolicy,
    StepRecord,
    _step,
)
from .dense import (
    UNIT_ROUNDOFF,
    CholeskyBreakdown,
    _power_estimate,
    as_matrix,
    cholesky,
    cross,
    jacobi_svd,
    require_tall,
)

DEFAULT_BLOCK = 64


class SparseSpd:
    """Symmetric matrix in CSR form with both triangles stored.

    Structure and values are validated on construction; positive
    definiteness is not (see :func:`spd_spot_check`).
    """

    def __init__(self, order: int, row_ptr, col_idx, values):
        self.order = int(order)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(col_idx, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        self._validate()
        lengths = np.diff(self.row_ptr)
        # slot p of the kernel touches the p-th stored entry of every row
        # that has one; precomputed once per matrix
        self._slots = []
        for p in range(int(lengths.max(initial=0))):
            rows = np.flatnonzero(lengths > p)
            idx = self.row_ptr[rows] + p
            self._slots.append((rows, self.col_idx[idx], self.values[idx]))

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def _validate(self) -> None:
        m, rp, ci, v = self.order, self.row_ptr, self.col_idx, self.values
        if m < 1 or rp.shape != (m + 1,) or rp[0] != 0:
            raise ValueError("row_ptr must have m+1 entries starting at 0")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if rp[-1] != ci.size or ci.size != v.size:
            raise ValueError("row_ptr[-1], len(col_idx) and len(values) disagree")
        if ci.size and (ci.min() < 0 or ci.max() >= m):
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite value")
        rows = np.repeat(np.arange(m), np.diff(rp))
        inner = np.diff(ci) > 0
        same_row = rows[1:] == rows[:-1]
        if np.any(same_row & ~inner):
            raise ValueError("column indices must be strictly increasing within each row")
        order = np.lexsort((rows, ci))
        if not (
            np.array_equal(rows, ci[order])
            and np.array_equal(ci, rows[order])
            and np.array_equal(v, v[order])
        ):
            raise ValueError("matrix is not exactly symmetric")

    @classmethod
    def from_coo(cls, m: int, rows, cols, vals) -> "SparseSpd":
        """Build from coordinates (0-based); duplicates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            key = rows * m + cols
            first = np.concatenate([[True], key[1:] != key[:-1]])
            starts = np.flatnonzero(first)
            vals = np.add.reduceat(vals, starts)
            rows, cols = rows[starts], cols[starts]
        row_ptr = np.zeros(m + 1, dtype=np.int64)
        np.add.at(row_ptr, rows + 1, 1)
        return cls(m, np.cumsum(row_ptr), cols, vals)

    @classmethod
    def from_dense(cls, B) -> "SparseSpd":
        B = np.asarray(B, dtype=np.float64)
        r, c = np.nonzero(B)
        return cls.from_coo(B.shape[0], r, c, B[r, c])

    def toarray(self) -> np.ndarray:
        B = np.zeros((self.order, self.order))
        rows = np.repeat(np.arange(self.order), np.diff(self.row_ptr))
        B[rows, self.col_idx] = self.values
        return B

    def matmat(self, X: np.ndarray) -> np.ndarray:
        """``B @ X``; each output entry sums its row's terms in CSR order."""
        Y = np.zeros((self.order, X.shape[1]))
        for rows, cols, vals in self._slots:
            Y[rows] += vals[:, None] * X[cols]
        return Y


def spmm_blocked(B: SparseSpd, X, block: int | None = None) -> np.ndarray:
    """``Y = B X`` formed ``block`` columns at a time.

    Every entry of ``Y`` is the same sequence of floating-point operations
    whatever the block size, so outputs are bit-identical across blocks.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != B.order:
        raise ValueError(f"dimension mismatch: B is {B.order}x{B.order}, X is {X.shape}")
    n = X.shape[1]
    block = n if block is None else block
    if not 1 <= block <= max(n, 1):
        raise ValueError(f"block must lie in [1, {n}], got {block}")
    Y = np.empty((B.order, n))
    for j0 in range(0, n, block):
        Y[:, j0 : j0 + block] = B.matmat(X[:, j0 : j0 + block])
    return Y


@dataclass(frozen=True)
class Metric:
    """An SPD metric with a cached estimate of ``||B||_2``.

    Use :meth:`identity`, :meth:`dense` or :meth:`sparse` to build one.
    """

    kind: str
    matrix: object = None
    norm2B: float = 1.0
    _norm_exact: bool = field(default=True, repr=False)

    @classmethod
    def identity(cls) -> "Metric":
        return cls("identity")

    @classmethod
    def dense(cls, B) -> "Metric":
        """Dense metric; the upper triangle of ``B`` is mirrored to the lower."""
        B = as_matrix(B, "B")
        if B.shape[0] != B.shape[1]:
            raise ValueError(f"B must be square, got {B.shape}")
        B = np.triu(B) + np.triu(B, 1).T
        return cls("dense", B, _metric_norm(lambda v: B @ v, B.shape[0]), False)

    @classmethod
    def sparse(cls, B: SparseSpd) -> "Metric":
        mv = lambda v: B.matmat(v[:, None])[:, 0]
        return cls("sparse", B, _metric_norm(mv, B.order), False)

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    @property
    def order(self) -> int | None:
        if self.kind == "dense":
            return self.matrix.shape[0]
        if self.kind == "sparse":
            return self.matrix.order
        return None

    @property
    def norm_bound(self) -> float:
        """``||B||_2`` as used by the safe shift (inflated when estimated)."""
        return self.norm2B if self._norm_exact else NORM_INFLATION * self.norm2B

    def apply(self, X, block: int | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.order is not None and X.shape[0] != self.order:
            raise ValueError(f"dimension mismatch: B has order {self.order}, X is {X.shape}")
        if self.kind == "identity":
            return X.copy()
        if self.kind == "sparse":
            return spmm_blocked(self.matrix, X, block)
        return self.matrix @ X

    def toarray(self, m: int | None = None) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(m)
        if self.kind == "sparse":
            return self.matrix.toarray()
        return self.matrix.copy()


def _metric_norm(matvec, order: int, max_iter: int = 300) -> float:
    # symmetric B: the estimate ||B(Bx)|| / ||Bx|| tends to lambda_max(B).
    # A fixed random start: the |B| column-sum start used for X is nearly the
    # lowest eigenvector of Laplacian-like metrics and stalls there.
    x0 = np.random.default_rng(0).standard_normal(order)
    return _power_estimate(matvec, matvec, x0, 1e-6, max_iter)


IDENTITY = Metric.identity()


def gram_oblique(X, B: Metric = IDENTITY, block: int | None = None) -> np.ndarray:
    """``fl(X^T (B X))`` by column blocks, symmetrized as ``(A + A^T) / 2``."""
    X = as_matrix(X)
    n = X.shape[1]
    if B.is_identity:
        A = cross(X, X)
    else:
        block = min(n, DEFAULT_BLOCK) if block is None else block
        A = np.empty((n, n))
        for j0 in range(0, n, block):
            W = X[:, j0 : j0 + block]
            A[:, j0 : j0 + block] = cross(X, B.apply(W, W.shape[1]))
    return (A + A.T) / 2.0


def compute_shift_oblique(m: int, n: int, norm2X: float, norm2B: float) -> float:
    """Safe oblique shift ``11 (2 m sqrt(mn) + n(n+1)) u ||X||_2^2 ||B||_2``."""
    if not (m >= 1 and n >= 1 and norm2X > 0 and norm2B > 0):
        raise ValueError("m, n, norm2X and norm2B must all be positive")
    return 11.0 * (2.0 * m * math.sqrt(m * n) + n * (n + 1)) * UNIT_ROUNDOFF * norm2X**2 * norm2B


def _oblique_breakdown(exc: CholeskyBreakdown, policy: ShiftPolicy) -> CholeskyBreakdown:
    if policy.mode in (ShiftMode.SAFE, ShiftMode.FROBENIUS):
        msg = f"{exc.args[0]} despite the safe shift; is B positive definite?"
        return CholeskyBreakdown(exc.info, exc.trace, msg)
    return exc


def shifted_cholesky_qr_b(
    X, B: Metric = IDENTITY, policy: ShiftPolicy = SAFE, block: int | None = None
) -> QrOutcome:
    """One shifted Cholesky QR pass with ``A = X^T B X``; ``Q^T B Q ~ I``."""
    X = as_matrix(X)
    require_tall(X)
    m, n = X.shape
    s = policy.shift_for(X, lambda nrm: compute_shift_oblique(m, n, nrm, B.norm_bound))
    trace: list[StepRecord] = []
    try:
        Q, R = _step(X, None, gram_oblique(X, B, block), s, 1, trace)
    except CholeskyBreakdown as exc:
        raise _oblique_breakdown(exc, policy) from None
    return QrOutcome(Q, R, trace)


def cholesky_qr_b(X, B: Metric = IDENTITY, block: int | None = None) -> QrOutcome:
    return shifted_cholesky_qr_b(X, B, ShiftPolicy(ShiftMode.NONE), block)


def cholesky_qr2_b(X, B: Metric = IDENTITY, block: int | None = None) -> QrOutcome:
    X = as_matrix(X)
    require_tall(X)
    trace: list[StepRecord] = []
    Q, R = X, None
    for k in (1, 2):
        Q, R = _step(Q, R, gram_oblique(Q, B, block), 0.0, k, trace)
    return QrOutcome(Q, R, trace)


def schol_qr3_b(
    X,
    B: Metric = IDENTITY,
    policy: ShiftPolicy = SAFE,
    block: int | None = None,
    literal: bool = False,
) -> QrOutcome:
    """Shifted oblique Cholesky QR followed by two B-Gram refinement passes.

    ``literal=True`` refines with the Euclidean Gram ``Q^T Q`` instead, which
    does not produce a B-orthonormal ``Q``; it exists for comparison only.
    """
    first = shifted_cholesky_qr_b(X, B, policy, block)
    trace = list(first.trace)
    Q, R = first.Q, first.R
    for _ in range(2):
        A = cross(Q, Q) if literal else gram_oblique(Q, B, block)
        Q, R = _step(Q, R, A, 0.0, len(trace) + 1, trace)
    return QrOutcome(Q, R, trace)


def b_orthonormality(Q, B: Metric = IDENTITY, block: int | None = None) -> float:
    """``||Q||_2 sqrt(||B||_2) / sqrt(sigma_n(Q^T B Q))`` (``kappa_2(Q)`` for ``B = I``)."""
    Q = as_matrix(Q, "Q")
    smin = jacobi_svd(gram_oblique(Q, B, block))[-1]
    if smin == 0.0:
        return math.inf
    return float(jacobi_svd(Q)[0] * math.sqrt(B.norm2B) / math.sqrt(smin))


def spd_spot_check(B: Metric) -> bool:
    """Cholesky-based positive-definiteness test of a dense or sparse metric."""
    if B.is_identity:
        return True
    try:
        cholesky(B.toarray())
    except CholeskyBreakdown:
        return False
    return True


# -- Matrix Market coordinate I/O ------------------------------------------

def read_matrix_market(path) -> SparseSpd:
    """Read a ``coordinate real|integer symmetric|general`` Matrix Market file.

    1-based indices become 0-based; a file storing one triangle of a
    symmetric matrix is mirrored to full storage. ``general`` files must be
    exactly symmetric.
    """
    path = Path(path)
    with open(path) as fh:
        banner = fh.readline().split()
        if len(banner) != 5 or banner[0].lower() != "%%matrixmarket":
            raise ValueError(f"{path}: missing %%MatrixMarket banner")
        obj, fmt, field_, sym = (t.lower() for t in banner[1:])
        if obj != "matrix" or fmt != "coordinate":
            raise ValueError(f"{path}: expected 'matrix coordinate', got '{obj} {fmt}'")
        if field_ not in ("real", "integer", "double"):
            raise ValueError(f"{path}: unsupported field '{field_}'")
        if sym not in ("symmetric", "general"):
            raise ValueError(f"{path}: unsupported symmetry '{sym}'")
        line = fh.readline()
        while line.startswith("%") or not line.strip():
            if not line:
                raise ValueError(f"{path}: missing size line")
            line = fh.readline()
        m, ncols, nnz = (int(t) for t in line.split())
        if m != ncols:
            raise ValueError(f"{path}: matrix is {m}x{ncols}, not square")
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if data.shape != (nnz, 3):
        raise ValueError(f"{path}: expected {nnz} entries of 3 fields, got {data.shape}")
    rows = data[:, 0].astype(np.int64) - 1
    cols = data[:, 1].astype(np.int64) - 1
    vals = data[:, 2]
    if sym == "symmetric":
        if np.any(rows < cols) and np.any(rows > cols):
            raise ValueError(f"{path}: symmetric file stores entries in both triangles")
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return SparseSpd.from_coo(m, rows, cols, vals)


def write_matrix_market(path, B: SparseSpd) -> None:
    """Write the lower triangle as ``coordinate real symmetric``."""
    rows = np.repeat(np.arange(B.order), np.diff(B.row_ptr))
    keep = rows >= B.col_idx
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        fh.write(f"{B.order} {B.order} {int(keep.sum())}\n")
        for i, j, v in zip(rows[keep], B.col_idx[keep], B.values[keep]):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def laplacian_2d(k: int, shift: float = 0.0) -> SparseSpd:
    """Five-point Laplacian on a ``k x k`` grid (order ``k^2``), plus ``shift*I``."""
    idx = np.arange(k * k).reshape(k, k)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [np.full(k * k, 4.0 + shift)]
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        for r, c in ((a, b), (b, a)):
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(np.full(r.size, -1.0))
    return SparseSpd.from_coo(k * k, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))

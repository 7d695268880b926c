"""Dense kernels shared by every factorization in the package.

Matrices are plain float64 ``numpy.ndarray`` objects. Symmetric and upper
triangular matrices are stored as full ``(n, n)`` arrays; the zero / mirrored
halves are enforced by construction rather than by a packed layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Unit roundoff of IEEE binary64.
UNIT_ROUNDOFF = 2.0**-53

# Element budget per chunk in the fixed-order Gram accumulation.
_CHUNK_ELEMS = 1 << 21


def gamma(k: int, u: float = UNIT_ROUNDOFF) -> float:
    """Return the rounding-error constant ``k u / (1 - k u)``."""
    ku = k * u
    if ku >= 1.0:
        raise ValueError(f"gamma({k}) undefined: k*u >= 1")
    return ku / (1.0 - ku)


@dataclass(frozen=True)
class BreakdownInfo:
    """Location of the first nonpositive pivot of a failed Cholesky.

    ``column`` is 1-based, matching the usual statement of the algorithm.
    """

    column: int
    pivot: float


class CholeskyBreakdown(np.linalg.LinAlgError):
    """Raised when Cholesky meets a pivot ``<= 0``.

    Breakdown is an expected outcome for ill-conditioned Gram matrices, so the
    exception carries everything a caller needs to react: the
    :class:`BreakdownInfo` and, when raised from a multi-step driver, the
    trace of the steps completed so far.
    """

    def __init__(self, info: BreakdownInfo, trace=None, message: str | None = None):
        self.info = info
        self.trace = list(trace) if trace is not None else []
        if message is None:
            message = (
                f"Cholesky breakdown at column {info.column} "
                f"(pivot = {info.pivot!r})"
            )
        super().__init__(message)

    def with_trace(self, trace) -> "CholeskyBreakdown":
        return CholeskyBreakdown(self.info, trace, self.args[0])


class JacobiConvergenceError(np.linalg.LinAlgError):
    """One-sided Jacobi did not converge; ``values`` holds the best estimates."""

    def __init__(self, values: np.ndarray, sweeps: int, off: float):
        self.values = values
        self.sweeps = sweeps
        self.off = off
        super().__init__(
            f"Jacobi SVD not converged after {sweeps} sweeps "
            f"(max off-diagonal cosine {off:.3e})"
        )


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Validate and convert to a finite 2-D float64 array."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"{name} must be a nonempty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        i, j = np.argwhere(~np.isfinite(A))[0]
        raise ValueError(f"{name} has a non-finite entry at ({i}, {j})")
    return A


def require_tall(X: np.ndarray, name: str = "X") -> None:
    m, n = X.shape
    if m < n:
        raise ValueError(f"{name} must satisfy m >= n, got {m} x {n}")


def _chunk_rows(m: int, width: int) -> int:
    return max(1, min(m, _CHUNK_ELEMS // max(width, 1)))


def _accumulate_rows(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Sum ``left[k] * right[k]`` over rows k in strictly ascending order.

    ``np.cumsum`` is a sequential accumulate, so every output entry is
    ``(((0 + p_0) + p_1) + ...) + p_{m-1}`` regardless of chunking.
    """
    m, width = left.shape
    acc = np.zeros(width)
    step = _chunk_rows(m, width)
    # overflow is reported by the caller with the offending entry
    with np.errstate(over="ignore", invalid="ignore"):
        for r0 in range(0, m, step):
            prod = left[r0 : r0 + step] * right[r0 : r0 + step]
            acc = np.cumsum(np.vstack([acc, prod]), axis=0)[-1]
    return acc


def _check_overflow(A: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(A)):
        i, j = np.argwhere(~np.isfinite(A))[0]
        raise FloatingPointError(f"{what} overflowed at entry ({i}, {j})")


def gram(X) -> np.ndarray:
    """Return ``fl(X^T X)``.

    Only the upper triangle is accumulated (rows of ``X`` summed in ascending
    order); the lower triangle is its mirror, so the result is bitwise
    symmetric and bit-reproducible.
    """
    X = as_matrix(X)
    n = X.shape[1]
    iu, ju = np.triu_indices(n)
    packed = _accumulate_rows(X[:, iu], X[:, ju])
    A = np.empty((n, n))
    A[iu, ju] = packed
    A[ju, iu] = packed
    _check_overflow(A, "Gram matrix")
    return A


def cross(X, Y) -> np.ndarray:
    """Return ``fl(X^T Y)`` with the same fixed summation order as :func:`gram`."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"row mismatch: {X.shape} vs {Y.shape}")
    p, q = X.shape[1], Y.shape[1]
    ii, jj = np.divmod(np.arange(p * q), q)
    out = _accumulate_rows(X[:, ii], Y[:, jj]).reshape(p, q)
    _check_overflow(out, "cross product")
    return out


def cholesky(A, shift: float = 0.0) -> np.ndarray:
    """Unblocked right-looking Cholesky of ``A + shift*I``.

    Returns upper triangular ``R`` with ``R^T R = A + shift*I + E``. Raises
    :class:`CholeskyBreakdown` at the first pivot ``<= 0``; no partial factor
    is returned.
    """
    if shift < 0:
        raise ValueError(f"shift must be nonnegative, got {shift}")
    W = np.array(A, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"A must be square, got shape {W.shape}")
    if np.any(np.isnan(W)):
        raise ValueError("A contains NaN")
    n = W.shape[0]
    if shift:
        W[np.diag_indices(n)] += shift
    R = np.zeros((n, n))
    for k in range(n):
        pivot = W[k, k]
        if not pivot > 0.0:
            raise CholeskyBreakdown(BreakdownInfo(k + 1, float(pivot)))
        rkk = math.sqrt(pivot)
        R[k, k] = rkk
        row = W[k, k + 1 :] / rkk
        R[k, k + 1 :] = row
        W[k + 1 :, k + 1 :] -= np.outer(row, row)
    return R


def tri_solve_rows(X, R) -> np.ndarray:
    """Compute ``Q = X R^{-1}`` by substitution, one independent solve per row.

    Column ``j`` of every row is ``(x_j - sum_{i<j} q_i r_ij) / r_jj`` with
    the sum taken in ascending ``i``. Rows never mix and the operation order
    does not depend on ``m``, so each row of ``Q`` is bitwise the solution of
    its own triangular system.
    """
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    n = R.shape[0]
    if R.shape != (n, n) or X.shape[1] != n:
        raise ValueError(f"shape mismatch: X {X.shape}, R {R.shape}")
    d = np.diag(R)
    if np.any(d == 0.0):
        raise ZeroDivisionError(f"R has a zero diagonal at column {int(np.argmin(d != 0.0)) + 1}")
    Q = np.empty_like(X)
    for j in range(n):
        s = X[:, j].copy()
        for i in range(j):
            s -= Q[:, i] * R[i, j]
        Q[:, j] = s / d[j]
    return Q


def trmul(R1, R2) -> np.ndarray:
    """Product of two upper triangular matrices (upper triangular result)."""
    R1 = np.asarray(R1, dtype=np.float64)
    R2 = np.asarray(R2, dtype=np.float64)
    if R1.shape != R2.shape or R1.shape[0] != R1.shape[1]:
        raise ValueError(f"order mismatch: {R1.shape} vs {R2.shape}")
    return np.triu(np.triu(R1) @ np.triu(R2))


def householder_qr(X) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR by Householder reflectors, with ``diag(R) >= 0``.

    A column that is already zero below the current row gets the identity
    reflector, leaving a zero on the diagonal of ``R``.
    """
    A = as_matrix(X).copy()
    require_tall(A)
    m, n = A.shape
    reflectors = []
    for k in range(n):
        x = A[k:, k]
        normx = np.linalg.norm(x)
        if normx == 0.0:
            reflectors.append(None)
            continue
        alpha = -math.copysign(normx, x[0])
        v = x.copy()
        v[0] -= alpha
        beta = 1.0 / (normx * (normx + abs(x[0])))
        if k + 1 < n:
            A[k:, k + 1 :] -= np.outer(beta * v, v @ A[k:, k + 1 :])
        A[k, k] = alpha
        A[k + 1 :, k] = 0.0
        reflectors.append((v, beta))
    R = np.triu(A[:n])
    Q = np.eye(m, n)
    for k in range(n - 1, -1, -1):
        if reflectors[k] is None:
            continue
        v, beta = reflectors[k]
        Q[k:, k:] -= np.outer(beta * v, v @ Q[k:, k:])
    signs = np.where(np.diag(R) < 0.0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: ``n - 1`` rounds of disjoint column pairs."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    k = len(players)
    rounds = []
    for _ in range(k - 1):
        pairs = [(players[i], players[k - 1 - i]) for i in range(k // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_svd(X, tol: float = 1e-15, max_sweeps: int = 30) -> np.ndarray:
    """Singular values (descending) by one-sided Jacobi on the columns of ``X``.

    The input is first reduced by Householder QR of its columns sorted by
    decreasing norm, and Jacobi runs on ``R^T`` (same singular values). On
    graded or square inputs this cuts the sweep count from 30+ to about 12.
    Sweeps use a round-robin ordering so each round rotates ``n // 2``
    disjoint column pairs at once. Convergence is declared when every
    off-diagonal cosine ``|x_i . x_j| / (|x_i| |x_j|)`` is at most ``tol``.
    """
    W = as_matrix(X)
    require_tall(W)
    m, n = W.shape
    if n == 1:
        return np.array([np.linalg.norm(W[:, 0])])
    order = np.argsort(-np.linalg.norm(W, axis=0), kind="stable")
    W = householder_qr(W[:, order])[1].T.copy()
    thresh = tol
    rounds = _round_robin(n)
    off = math.inf
    for sweep in range(1, max_sweeps + 1):
        off = 0.0
        for p, q in rounds:
            xp = W[:, p]
            xq = W[:, q]
            a = np.einsum("ij,ij->j", xp, xp)
            b = np.einsum("ij,ij->j", xq, xq)
            g = np.einsum("ij,ij->j", xp, xq)
            denom = np.sqrt(a) * np.sqrt(b)
            with np.errstate(divide="ignore", invalid="ignore"):
                cos = np.where(denom > 0.0, np.abs(g) / denom, 0.0)
            off = max(off, float(cos.max()))
            act = cos > thresh
            if not act.any():
                continue
            a, b, g = a[act], b[act], g[act]
            zeta = (b - a) / (2.0 * g)
            t = np.sign(zeta) / (np.abs(zeta) + np.hypot(1.0, zeta))
            t[zeta == 0.0] = 1.0
            c = 1.0 / np.hypot(1.0, t)
            s = c * t
            pa, qa = p[act], q[act]
            xp, xq = W[:, pa], W[:, qa]
            W[:, pa] = c * xp - s * xq
            W[:, qa] = s * xp + c * xq
        if off <= thresh:
            break
    sv = np.sort(np.linalg.norm(W, axis=0))[::-1]
    if off > thresh:
        raise JacobiConvergenceError(sv, max_sweeps, off)
    return sv


def normest2(X, tol: float = 1e-4, max_iter: int = 100) -> float:
    """Estimate ``||X||_2`` by power iteration on ``X^T X``.

    Starts from the column sums of ``|X|`` and stops when successive
    estimates agree to relative ``tol``. The estimate never exceeds the true
    norm in exact arithmetic.
    """
    X = np.asarray(X, dtype=np.float64)
    return _power_estimate(lambda v: X @ v, lambda w: X.T @ w, np.abs(X).sum(axis=0), tol, max_iter)


def _power_estimate(matvec, rmatvec, x0: np.ndarray, tol: float, max_iter: int) -> float:
    x = np.asarray(x0, dtype=np.float64).copy()
    e = float(np.linalg.norm(x))
    if e == 0.0:
        return 0.0
    x /= e
    rng = None
    for _ in range(max_iter):
        y = matvec(x)
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            # start vector in the null space; retry from a fixed random one
            rng = rng or np.random.default_rng(0)
            x = rng.standard_normal(x.shape[0])
            x /= np.linalg.norm(x)
            y = matvec(x)
            ny = float(np.linalg.norm(y))
            if ny == 0.0:
                return 0.0
        x = rmatvec(y)
        nx = float(np.linalg.norm(x))
        e0, e = e, nx / ny
        x /= nx
        if abs(e - e0) <= tol * e:
            break
    return e

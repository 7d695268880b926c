"""Cholesky QR family over the standard inner product.

``shifted_cholesky_qr`` is the preconditioning step, ``cholesky_qr2`` the
classic two-pass refinement, ``schol_qr3`` their composition, and
``iterated_cholesky_qr`` the adaptive loop that shifts only on breakdown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .dense import (
    UNIT_ROUNDOFF,
    CholeskyBreakdown,
    as_matrix,
    cholesky,
    gram,
    normest2,
    require_tall,
    tri_solve_rows,
    trmul,
)

# normest2 may underestimate slightly; the inflated value is an upper bound
# with high probability.
NORM_INFLATION = 1.01

# An iterate this close to orthonormal has kappa_2 <= sqrt(3); one unshifted
# pass from it reaches working-precision orthogonality.
FLOOR_ENTRY = 0.5


def compute_shift(m: int, n: int, norm2X: float) -> float:
    """Breakdown-safe shift ``11 (mn + n(n+1)) u ||X||_2^2``."""
    if not (m >= n >= 1):
        raise ValueError(f"need m >= n >= 1, got m={m}, n={n}")
    if not norm2X > 0:
        raise ValueError(f"norm2X must be positive, got {norm2X}")
    return 11.0 * (m * n + n * (n + 1)) * UNIT_ROUNDOFF * norm2X**2


class ShiftMode(str, Enum):
    SAFE = "safe"
    FROBENIUS = "frob"
    FIXED = "fixed"
    NONE = "none"


@dataclass(frozen=True)
class ShiftPolicy:
    """How the shift of a shifted Cholesky step is chosen.

    ``SAFE`` plugs an inflated power-iteration estimate of ``||X||_2`` (or the
    caller's ``norm_estimate``) into the safe formula; ``FROBENIUS`` uses
    ``||X||_F`` instead, a cheap and conservative bound; ``FIXED`` uses
    ``value`` as the absolute shift; ``NONE`` means no shift.
    """

    mode: ShiftMode = ShiftMode.SAFE
    value: float | None = None
    norm_estimate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", ShiftMode(self.mode))
        if self.mode is ShiftMode.FIXED:
            if self.value is None or not self.value >= 0:
                raise ValueError(f"fixed shift must be >= 0, got {self.value}")

    @classmethod
    def parse(cls, text: str) -> "ShiftPolicy":
        """Parse ``safe``, ``frob``, ``none`` or ``fixed:<value>``."""
        text = text.strip().lower()
        if text.startswith("fixed:"):
            return cls(ShiftMode.FIXED, float(text.split(":", 1)[1]))
        try:
            return cls(ShiftMode(text))
        except ValueError:
            raise ValueError(f"unknown shift policy {text!r}") from None

    def __str__(self) -> str:
        if self.mode is ShiftMode.FIXED:
            return f"fixed:{self.value!r}"
        return self.mode.value

    def norm_of(self, X: np.ndarray) -> float:
        if self.norm_estimate is not None:
            return float(self.norm_estimate)
        if self.mode is ShiftMode.FROBENIUS:
            return float(np.linalg.norm(X))
        return NORM_INFLATION * normest2(X)

    def shift_for(self, X: np.ndarray, formula: Callable[[float], float]) -> float:
        """Shift for factorizing ``X``; ``formula`` maps a norm to a shift."""
        if self.mode is ShiftMode.NONE:
            return 0.0
        if self.mode is ShiftMode.FIXED:
            return float(self.value)
        norm = self.norm_of(X)
        return formula(norm) if norm > 0 else 0.0


SAFE = ShiftPolicy()
NO_SHIFT = ShiftPolicy(ShiftMode.NONE)


@dataclass
class StepRecord:
    step_index: int
    shift_used: float = 0.0
    breakdown_retried: bool = False
    orthogonality_after: float | None = None


@dataclass
class QrOutcome:
    Q: np.ndarray
    R: np.ndarray
    trace: list[StepRecord] = field(default_factory=list)
    converged: bool = True

    @property
    def cholesky_calls(self) -> int:
        return sum(1 + r.breakdown_retried for r in self.trace)

    @property
    def shifts(self) -> list[float]:
        return [r.shift_used for r in self.trace]


def orthogonality_f(Q: np.ndarray, A: np.ndarray | None = None) -> float:
    """``||Q^T Q - I||_F``; pass ``A = gram(Q)`` to reuse it."""
    if A is None:
        A = gram(Q)
    return float(np.linalg.norm(A - np.eye(A.shape[0])))


def _step(Q, R_acc, A, shift, index, trace, *, retried=False):
    try:
        Rt = cholesky(A, shift)
    except CholeskyBreakdown as exc:
        raise exc.with_trace(trace) from None
    Q = tri_solve_rows(Q, Rt)
    R_acc = Rt if R_acc is None else trmul(Rt, R_acc)
    trace.append(StepRecord(index, shift, retried))
    return Q, R_acc


def shifted_cholesky_qr(X, policy: ShiftPolicy = SAFE) -> QrOutcome:
    """One (shifted) Cholesky QR pass: ``R = chol(X^T X + sI)``, ``Q = X R^{-1}``.

    Raises :class:`CholeskyBreakdown` if the factorization fails even with
    the shift.
    """
    X = as_matrix(X)
    require_tall(X)
    m, n = X.shape
    s = policy.shift_for(X, lambda nrm: compute_shift(m, n, nrm))
    trace: list[StepRecord] = []
    Q, R = _step(X, None, gram(X), s, 1, trace)
    return QrOutcome(Q, R, trace)


def cholesky_qr(X) -> QrOutcome:
    """Plain unshifted Cholesky QR."""
    return shifted_cholesky_qr(X, NO_SHIFT)


def _refine(Q, R, trace, passes: int, gram_fn=gram) -> tuple[np.ndarray, np.ndarray]:
    for _ in range(passes):
        Q, R = _step(Q, R, gram_fn(Q), 0.0, len(trace) + 1, trace)
    return Q, R


def cholesky_qr2(X) -> QrOutcome:
    """Two unshifted Cholesky QR passes with ``R = R_2 R_1``.

    Intended for ``kappa_2(X)`` below about ``u^{-1/2}``; beyond that the
    first Cholesky usually breaks down and :class:`CholeskyBreakdown`
    propagates.
    """
    X = as_matrix(X)
    require_tall(X)
    trace: list[StepRecord] = []
    Q, R = _refine(X, None, trace, 2)
    return QrOutcome(Q, R, trace)


def schol_qr3(X, policy: ShiftPolicy = SAFE) -> QrOutcome:
    """Shifted Cholesky QR followed by CholeskyQR2 on its ``Q``.

    A breakdown in the CholeskyQR2 stage is not retried with a shift; the
    exception carries the trace up to the failing step.
    """
    first = shifted_cholesky_qr(X, policy)
    trace = list(first.trace)
    Q, R = _refine(first.Q, first.R, trace, 2)
    return QrOutcome(Q, R, trace)


def iterated_cholesky_qr(
    X,
    policy: ShiftPolicy = SAFE,
    max_iter: int = 8,
    tol: float | None = None,
    callback: Callable[[int, np.ndarray, StepRecord], None] | None = None,
) -> QrOutcome:
    """Repeat Cholesky QR, shifting only when ``chol(Q^T Q)`` breaks down.

    The shift is sized from the current iterate ``Q``. Iteration stops once
    ``||Q^T Q - I||_F <= tol`` (default ``sqrt(n) u``), or once an unshifted
    pass started from an iterate with ``||Q^T Q - I||_F <= 1/2``: such a
    pass already lands on the rounding floor (around ``1e-15`` in practice,
    above ``sqrt(n) u``), so further passes cannot improve it. After
    ``max_iter`` passes without either, the outcome has ``converged=False``.
    ``callback(k, Q, record)`` sees every iterate.
    """
    X = as_matrix(X)
    require_tall(X)
    m, n = X.shape
    if tol is None:
        tol = math.sqrt(n) * UNIT_ROUNDOFF
    trace: list[StepRecord] = []
    Q, R = X, None
    A = gram(X)
    prev = orthogonality_f(X, A)
    for k in range(1, max_iter + 1):
        try:
            Q, R = _step(Q, R, A, 0.0, k, trace)
        except CholeskyBreakdown as exc:
            s = policy.shift_for(Q, lambda nrm: compute_shift(m, n, nrm))
            if s == 0.0:
                raise exc
            Q, R = _step(Q, R, A, s, k, trace, retried=True)
        A = gram(Q)
        rec = trace[-1]
        rec.orthogonality_after = orthogonality_f(Q, A)
        if callback is not None:
            callback(k, Q, rec)
        floor_reached = not rec.breakdown_retried and prev <= FLOOR_ENTRY
        if rec.orthogonality_after <= tol or floor_reached:
            return QrOutcome(Q, R, trace)
        prev = rec.orthogonality_after
    return QrOutcome(Q, R, trace, converged=False)

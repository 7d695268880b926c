"""Gram-Schmidt reference methods (CGS, MGS and their twice-run variants).

All variants work in the B-inner product; ``B = I`` is simply the identity
metric, so the standard case runs the same code path.
"""

from __future__ import annotations

import math
from enum import Enum

import numpy as np

from .cholqr import QrOutcome, StepRecord
from .dense import UNIT_ROUNDOFF, as_matrix, require_tall
from .oblique import IDENTITY, Metric


# Default rank threshold is RANK_TOL_FACTOR * u * ||X||_F * sqrt(||B||_2).
# Measured: exactly dependent columns leave <= 1.5 (twice-run) and <= 3.8
# (MGS) of this unit after projection; full-rank randsvd columns at
# kappa = 1e15, m = 300 keep >= 10.9. Single-pass CGS can leave several
# hundred units on a dependent column, so it detects only gross deficiency.
RANK_TOL_FACTOR = 4.0


class Variant(str, Enum):
    CLASSICAL = "classical"
    MODIFIED = "modified"


class RankDeficiencyError(np.linalg.LinAlgError):
    def __init__(self, column: int, norm: float):
        self.column = column
        self.norm = norm
        super().__init__(f"column {column} is numerically dependent (B-norm {norm:.3e} after projection)")


def _bdot(B: Metric, a: np.ndarray, v: np.ndarray) -> float:
    # (a, v)_B = a^T (B v), B v formed fresh for every product
    return float(a @ B.apply(v[:, None])[:, 0])


def _project_classical(Q, j, v, B):
    Bv = B.apply(v[:, None])[:, 0]
    r = Q[:, :j].T @ Bv
    return v - Q[:, :j] @ r, r


def _project_modified(Q, j, v, B):
    r = np.empty(j)
    for i in range(j):
        r[i] = _bdot(B, Q[:, i], v)
        v = v - r[i] * Q[:, i]
    return v, r


def gram_schmidt(
    X,
    B: Metric = IDENTITY,
    variant: Variant | str = Variant.MODIFIED,
    passes: int = 1,
    rank_tol: float | None = None,
) -> QrOutcome:
    """Column-by-column Gram-Schmidt in the B-inner product.

    With ``passes=2`` each column is projected a second time against all
    previous columns and the second-pass coefficients are added into ``R``.
    A column whose B-norm after projection is ``<= rank_tol`` raises
    :class:`RankDeficiencyError`; the default threshold is
    ``4 u ||X||_F sqrt(||B||_2)`` (see ``RANK_TOL_FACTOR``).
    """
    X = as_matrix(X)
    require_tall(X)
    variant = Variant(variant)
    if passes not in (1, 2):
        raise ValueError(f"passes must be 1 or 2, got {passes}")
    m, n = X.shape
    if rank_tol is None:
        rank_tol = RANK_TOL_FACTOR * UNIT_ROUNDOFF * float(np.linalg.norm(X)) * math.sqrt(B.norm2B)
    project = _project_classical if variant is Variant.CLASSICAL else _project_modified
    Q = np.zeros((m, n))
    R = np.zeros((n, n))
    for j in range(n):
        v = X[:, j].copy()
        for _ in range(passes):
            v, r = project(Q, j, v, B)
            R[:j, j] += r
        norm = math.sqrt(max(_bdot(B, v, v), 0.0))
        if norm <= rank_tol:
            raise RankDeficiencyError(j + 1, norm)
        R[j, j] = norm
        Q[:, j] = v / norm
    return QrOutcome(Q, R, [StepRecord(1)])


def cgs(X, B: Metric = IDENTITY) -> QrOutcome:
    return gram_schmidt(X, B, Variant.CLASSICAL, 1)


def mgs(X, B: Metric = IDENTITY) -> QrOutcome:
    return gram_schmidt(X, B, Variant.MODIFIED, 1)


def cgs2(X, B: Metric = IDENTITY) -> QrOutcome:
    return gram_schmidt(X, B, Variant.CLASSICAL, 2)


def mgs2(X, B: Metric = IDENTITY) -> QrOutcome:
    return gram_schmidt(X, B, Variant.MODIFIED, 2)

"""Accuracy measurements of a computed QR factorization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cholqr import QrOutcome
from .dense import as_matrix, gram, jacobi_svd
from .oblique import IDENTITY, Metric, b_orthonormality, gram_oblique


@dataclass(frozen=True)
class MetricsReport:
    orthogonality_F: float
    orthogonality_2: float
    residual_F: float
    residual_rel: float
    cond2_Q: float
    b_measure: float | None = None
    cholesky_calls: int = 0
    shifts: list[float] = field(default_factory=list)


def spectral_norm(X) -> float:
    return float(jacobi_svd(X)[0])


def cond2(X) -> float:
    """``sigma_1 / sigma_n`` from the one-sided Jacobi SVD; ``inf`` if singular."""
    s = jacobi_svd(X)
    return float(s[0] / s[-1]) if s[-1] > 0 else math.inf


def measure(X, Q, R, B: Metric = IDENTITY, outcome: QrOutcome | None = None) -> MetricsReport:
    """Orthogonality, residual and conditioning of ``X ~ Q R``.

    Orthogonality is measured in the metric ``B`` (``Q^T B Q - I``). The
    2-norm version is the largest singular value of the symmetric matrix
    ``G - I``, i.e. the larger of ``|lambda_max(G) - 1|`` and
    ``|lambda_min(G) - 1|``. ``b_measure`` is only filled for ``B != I``.
    """
    X = as_matrix(X)
    Q = as_matrix(Q, "Q")
    R = np.asarray(R, dtype=np.float64)
    n = Q.shape[1]
    G = gram(Q) if B.is_identity else gram_oblique(Q, B)
    D = G - np.eye(n)
    resid = float(np.linalg.norm(Q @ R - X))
    normX = spectral_norm(X)
    return MetricsReport(
        orthogonality_F=float(np.linalg.norm(D)),
        orthogonality_2=spectral_norm(D),
        residual_F=resid,
        residual_rel=resid / normX if normX > 0 else 0.0,
        cond2_Q=cond2(Q),
        b_measure=None if B.is_identity else b_orthonormality(Q, B),
        cholesky_calls=outcome.cholesky_calls if outcome is not None else 0,
        shifts=list(outcome.shifts) if outcome is not None else [],
    )

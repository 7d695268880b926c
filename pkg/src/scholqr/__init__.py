"""Shifted Cholesky QR (sCholQR3) for ill-conditioned tall-skinny matrices.

Standard and B-inner-product variants, Gram-Schmidt and Householder
references, randsvd test matrices and accuracy metrics.
"""

from .baselines import RankDeficiencyError, cgs, cgs2, gram_schmidt, mgs, mgs2
from .cholqr import (
    NO_SHIFT,
    SAFE,
    QrOutcome,
    ShiftMode,
    ShiftPolicy,
    StepRecord,
    cholesky_qr,
    cholesky_qr2,
    compute_shift,
    iterated_cholesky_qr,
    orthogonality_f,
    schol_qr3,
    shifted_cholesky_qr,
)
from .dense import (
    UNIT_ROUNDOFF,
    BreakdownInfo,
    CholeskyBreakdown,
    JacobiConvergenceError,
    cholesky,
    gram,
    householder_qr,
    jacobi_svd,
    normest2,
)
from .metrics import MetricsReport, cond2, measure
from .oblique import (
    IDENTITY,
    Metric,
    SparseSpd,
    b_orthonormality,
    cholesky_qr2_b,
    cholesky_qr_b,
    compute_shift_oblique,
    gram_oblique,
    laplacian_2d,
    read_matrix_market,
    schol_qr3_b,
    shifted_cholesky_qr_b,
    spmm_blocked,
    write_matrix_market,
)
from .testgen import RandsvdSpec, randsvd, random_spd

__version__ = "0.1.0"

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scholqr.baselines import RankDeficiencyError, Variant, cgs, cgs2, gram_schmidt, mgs, mgs2
from scholqr.dense import householder_qr, jacobi_svd
from scholqr.oblique import IDENTITY, Metric, gram_oblique, laplacian_2d
from scholqr.testgen import random_spd
from conftest import U, make_x

ALL = [cgs, mgs, cgs2, mgs2]


def orth_f(Q, B=IDENTITY):
    return float(np.linalg.norm(gram_oblique(Q, B) - np.eye(Q.shape[1])))


@pytest.mark.parametrize("fn", ALL)
def test_orthonormal_input_is_fixed_point(fn):
    Q0, _ = householder_qr(make_x(80, 6, 1.0, seed=3))
    out = fn(Q0)
    assert np.max(np.abs(out.Q - Q0)) <= 100 * U
    assert np.max(np.abs(out.R - np.eye(6))) <= 100 * U


def test_mgs_loses_orthogonality_proportionally():
    X = make_x(300, 10, 1e8, seed=1)
    o = orth_f(mgs(X).Q)
    assert 1e-10 <= o <= 1e-6
    assert orth_f(cgs2(X).Q) <= 1e-14
    assert orth_f(mgs2(X).Q) <= 1e-14


@pytest.mark.parametrize("kappa", [1e8, 1e10, 1e12, 1e14, 1e15])
def test_twice_is_flat_and_residual_small(kappa):
    X = make_x(300, 10, kappa, seed=2)
    for fn in ALL:
        out = fn(X)
        assert np.linalg.norm(out.Q @ out.R - X) / jacobi_svd(X)[0] <= 100 * 10 * U
    for fn in (cgs2, mgs2):
        assert orth_f(fn(X).Q) <= 100 * 10 * U


def test_identity_metric_path_is_bitwise_default():
    X = make_x(120, 8, 1e6, seed=4)
    for variant in Variant:
        for passes in (1, 2):
            a = gram_schmidt(X, variant=variant, passes=passes)
            b = gram_schmidt(X, IDENTITY, variant, passes)
            assert np.array_equal(a.Q, b.Q) and np.array_equal(a.R, b.R)


def test_b_inner_product_variants():
    X = make_x(200, 12, 1e6, seed=5)
    B = Metric.dense(random_spd(200, 1e4, seed=9))
    for fn in (cgs2, mgs2):
        out = fn(X, B)
        assert orth_f(out.Q, B) <= 1e-12
        assert np.linalg.norm(out.Q @ out.R - X) <= 1e-14
    S = Metric.sparse(laplacian_2d(10, shift=0.1))
    Y = make_x(100, 5, 1e3, seed=1)
    assert orth_f(mgs2(Y, S).Q, S) <= 1e-12


@pytest.mark.parametrize("fn", ALL)
def test_zero_column_names_column(fn):
    X = make_x(50, 4, 10.0, seed=1)
    X[:, 2] = 0.0
    with pytest.raises(RankDeficiencyError) as ei:
        fn(X)
    assert ei.value.column == 3
    assert "column 3" in str(ei.value)


@pytest.mark.parametrize("fn", [mgs, cgs2, mgs2])
@pytest.mark.parametrize("seed", range(5))
def test_dependent_column_detected(fn, seed):
    X = make_x(300, 10, 1e4, seed)
    X[:, 6] = X[:, :6] @ np.random.default_rng(seed).standard_normal(6)
    with pytest.raises(RankDeficiencyError) as ei:
        fn(X)
    assert ei.value.column == 7


def test_rank_tolerance_is_configurable():
    X = make_x(300, 10, 1e15, seed=1)
    mgs2(X)  # the default threshold admits kappa = 1e15
    with pytest.raises(RankDeficiencyError):
        gram_schmidt(X, passes=2, rank_tol=300 * U * np.linalg.norm(X))


def test_bad_arguments():
    with pytest.raises(ValueError):
        gram_schmidt(np.eye(3), passes=3)
    with pytest.raises(ValueError):
        gram_schmidt(np.eye(3), variant="householder")
    with pytest.raises(ValueError):
        gram_schmidt(np.ones((2, 3)))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 10), extra=st.integers(0, 40), seed=st.integers(0, 10**6), logk=st.floats(0, 12))
def test_gram_schmidt_properties(n, extra, seed, logk):
    m = n + extra
    X = make_x(m, n, 10.0**logk, seed)
    for fn in ALL:
        out = fn(X)
        assert np.array_equal(out.R, np.triu(out.R))
        assert np.all(np.diag(out.R) > 0)
        assert np.linalg.norm(out.Q @ out.R - X) / jacobi_svd(X)[0] <= 100 * n * U

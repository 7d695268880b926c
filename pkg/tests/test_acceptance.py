"""Acceptance criteria, each checked at its stated tolerance.

Seeds are fixed in advance (1..10 per configuration, 1..5 per grid cell)
and never tuned. Every test records one PASS/FAIL line that is printed in
the pytest terminal summary.
"""

import math
import time

import numpy as np

from scholqr.baselines import cgs2, mgs, mgs2
from scholqr.cholqr import cholesky_qr, cholesky_qr2, compute_shift, schol_qr3, shifted_cholesky_qr
from scholqr.dense import CholeskyBreakdown, gram, householder_qr, jacobi_svd
from scholqr.metrics import measure
from scholqr.oblique import (
    Metric,
    b_orthonormality,
    cholesky_qr_b,
    gram_oblique,
    laplacian_2d,
    read_matrix_market,
    schol_qr3_b,
    shifted_cholesky_qr_b,
    spmm_blocked,
    write_matrix_market,
)
from scholqr.testgen import child_seed, random_spd
from conftest import U, make_x, record

SEEDS10 = range(1, 11)
SEEDS5 = range(1, 6)


def spectral(A):
    return float(jacobi_svd(A)[0])


def test_c1_breakdown_demonstration():
    t0 = time.perf_counter()
    broke = ok = 0
    for seed in SEEDS10:
        X = make_x(1000, 30, 1e12, seed)
        try:
            cholesky_qr(X)
        except CholeskyBreakdown:
            broke += 1
        try:
            schol_qr3(X)
            ok += 1
        except CholeskyBreakdown:
            pass
    dt = time.perf_counter() - t0
    passed = broke >= 9 and ok == 10 and dt < 5
    assert record("C1 breakdown demonstration", passed,
                  f"CholeskyQR broke down {broke}/10 (need >= 9), sCholQR3 succeeded {ok}/10, {dt:.1f}s (< 5s)")


def test_c2_condition_reduction():
    t0 = time.perf_counter()
    fails, kq = [], []
    for seed in SEEDS10:
        X = make_x(1000, 30, 1e12, seed)
        out = shifted_cholesky_qr(X)
        sx = jacobi_svd(X)
        alpha = out.trace[0].shift_used / sx[0] ** 2
        kappa = sx[0] / sx[-1]
        sq = jacobi_svd(out.Q)
        k1 = sq[0] / sq[-1]
        kq.append(k1)
        bound = 2 * math.sqrt(3) * math.sqrt(1 + alpha * kappa**2)
        if not (k1 <= bound and 1e5 <= k1 <= 1e8):
            fails.append((seed, k1, bound))
    dt = time.perf_counter() - t0
    passed = not fails and dt < 10
    assert record("C2 condition reduction", passed,
                  f"kappa2(Q1) in [{min(kq):.2e}, {max(kq):.2e}] (band [1e5, 1e8], reference 6.14e6), "
                  f"bound violations {len(fails)}/10, {dt:.1f}s (< 10s)")


def test_c3_stability_bounds():
    t0 = time.perf_counter()
    bad, worst_o, worst_r, runs = [], 0.0, 0.0, 0
    for m in (300, 1000):
        for n in (10, 50):
            ob = 6 * (m * n + n * (n + 1)) * U
            rb = 15 * n * n * U
            for kappa in (1e8, 1e10, 1e12, 1e14):
                for seed in SEEDS5:
                    runs += 1
                    X = make_x(m, n, kappa, seed)
                    try:
                        out = schol_qr3(X)
                    except CholeskyBreakdown as exc:
                        bad.append((m, n, kappa, seed, f"breakdown at step {len(exc.trace) + 1}"))
                        continue
                    o = float(np.linalg.norm(gram(out.Q) - np.eye(n)))
                    r = float(np.linalg.norm(out.Q @ out.R - X)) / spectral(X)
                    worst_o, worst_r = max(worst_o, o / ob), max(worst_r, r / rb)
                    if o > ob or r > rb:
                        bad.append((m, n, kappa, seed, f"orth {o:.2e}, resid {r:.2e}"))
    dt = time.perf_counter() - t0
    passed = not bad and dt < 120
    cells = sorted({(m, n, k) for m, n, k, _, _ in bad})
    assert record("C3 stability bounds", passed,
                  f"{runs - len(bad)}/{runs} runs within both bounds "
                  f"(worst orth {worst_o:.1e} of bound, worst resid {worst_r:.1e} of bound), "
                  f"failing cells (m, n, kappa): {cells or 'none'}, {dt:.1f}s (< 120s)")


def test_c4_orthogonality_across_kappa():
    t0 = time.perf_counter()
    kappas = [10.0**k for k in range(8, 16)]
    seeds = (1, 2, 3)
    methods = {"sCholQR3": schol_qr3, "CGS2": cgs2, "MGS2": mgs2,
               "Householder": lambda X: householder_qr(X)}
    curves = {name: {} for name in [*methods, "MGS"]}
    for kappa in kappas:
        for seed in seeds:
            X = make_x(300, 10, kappa, seed)
            for name, fn in [*methods.items(), ("MGS", mgs)]:
                try:
                    res = fn(X)
                    Q = res[0] if isinstance(res, tuple) else res.Q
                    o = float(np.linalg.norm(gram(Q) - np.eye(10)))
                except CholeskyBreakdown:
                    o = math.inf
                curves[name].setdefault(kappa, []).append(o)
    msgs, passed = [], True
    for name in methods:
        per_k = {k: max(v) for k, v in curves[name].items()}
        worst = max(per_k.values())
        ratio = max(per_k.values()) / min(per_k.values())
        ok = worst <= 1e-13 and ratio <= 100
        passed &= ok
        bad = [f"{k:.0e}" for k, v in per_k.items() if not v <= 1e-13]
        msgs.append(f"{name} max {worst:.1e} flat-ratio {ratio:.1e}" + (f" (fails at kappa {bad})" if bad else ""))
    med = {k: float(np.median(v)) for k, v in curves["MGS"].items()}
    growth = med[1e14] / med[1e8]
    passed &= growth >= 1e4
    msgs.append(f"MGS growth 1e8->1e14 {growth:.1e} (need >= 1e4)")
    breakdowns = sum(math.isinf(o) for v in curves["sCholQR3"].values() for o in v)
    dt = time.perf_counter() - t0
    passed &= dt < 120
    assert record("C4 orthogonality across kappa", passed,
                  "; ".join(msgs) + f"; sCholQR3 breakdowns {breakdowns}/24; {dt:.1f}s (< 120s)")


def test_c5_cholqr2_residual():
    bad, runs, worst = [], 0, 0.0
    for m in (300, 1000):
        for n in (10, 50):
            for kappa in (1e0, 1e2, 1e4, 1e6):
                for seed in SEEDS5:
                    runs += 1
                    X = make_x(m, n, kappa, seed)
                    out = cholesky_qr2(X)
                    r = float(np.linalg.norm(out.Q @ out.R - X))
                    bound = 5 * n * n * U * spectral(X)
                    worst = max(worst, r / bound)
                    if r > bound:
                        bad.append((m, n, kappa, seed))
    assert record("C5 CholeskyQR2 residual", not bad,
                  f"{runs - len(bad)}/{runs} runs with ||QR - X||_F <= 5 n^2 u ||X||_2 (worst {worst:.1e} of bound)")


def test_c6_oblique_table3():
    t0 = time.perf_counter()
    m, n, kb = 300, 30, 1e8
    bound = 8 * (m * math.sqrt(m * n) + n * (n + 1)) * U * kb
    m1, o3, bad = [], [], []
    for seed in SEEDS10:
        X = make_x(m, n, 1e12, seed)
        B = Metric.dense(random_spd(m, kb, child_seed(seed, 0)))
        Q = shifted_cholesky_qr_b(X, B).Q
        m1.append(b_orthonormality(Q, B))
        for _ in range(2):
            Q = cholesky_qr_b(Q, B).Q
        o = spectral(gram_oblique(Q, B) - np.eye(n))
        o3.append(o)
        if not (1e7 <= m1[-1] <= 1e10 and o <= bound and o <= 1e-13):
            bad.append(seed)
    dt = time.perf_counter() - t0
    passed = not bad and dt < 30
    assert record("C6 oblique table3", passed,
                  f"step-1 measure in [{min(m1):.2e}, {max(m1):.2e}] (band [1e7, 1e10], reference 4.11e8), "
                  f"final ||Q^T B Q - I||_2 <= {max(o3):.2e} (bound {bound:.2e}, observed cap 1e-13), "
                  f"{10 - len(bad)}/10 seeds, {dt:.1f}s (< 30s)")


def test_c7_oblique_stability_sweep():
    cells = ([(500, 20, kx, 1e10) for kx in (1e2, 1e4, 1e6, 1e8, 1e10)]
             + [(300, 50, 1e10, kb) for kb in (1e8, 1e9, 1e10)]
             + [(m, 50, 1e8, 1e10) for m in (500, 1000)]
             + [(1000, 100, 1e8, 1e10)])
    bad_bound, bad_emp, runs, worst = [], [], 0, 0.0
    for m, n, kx, kb in cells:
        for seed in (1, 2):
            runs += 1
            X = make_x(m, n, kx, seed)
            B = Metric.dense(random_spd(m, kb, child_seed(seed, 0)))
            try:
                out = schol_qr3_b(X, B)
            except CholeskyBreakdown:
                bad_bound.append((m, n, kx, kb, seed))
                bad_emp.append((m, n, kx, kb, seed))
                continue
            r = float(np.linalg.norm(out.Q @ out.R - X)) / spectral(X)
            worst = max(worst, r)
            if r > 16 * n * n * U * kb**1.5:
                bad_bound.append((m, n, kx, kb, seed))
            if r > 1e-12:
                bad_emp.append((m, n, kx, kb, seed))
    passed = not bad_bound and not bad_emp
    assert record("C7 oblique stability sweep", passed,
                  f"{runs - len(bad_bound)}/{runs} within 16 n^2 u kappa_B^1.5, "
                  f"{runs - len(bad_emp)}/{runs} within 1e-12 (max resid_rel {worst:.1e})")


def test_c8_householder_oracle():
    bad, runs, worst = [], 0, 0.0
    for m, n in ((20, 3), (50, 5), (100, 10)):
        for kappa in (1e0, 1e1, 1e2, 1e3):
            for seed in (1, 2, 3):
                runs += 1
                X = make_x(m, n, kappa, seed)
                out = schol_qr3(X)
                Qh, Rh = householder_qr(X)
                sign = np.sign(np.diag(out.R))
                R, Q = out.R * sign[:, None], out.Q * sign
                tol = 1e3 * n * U * spectral(X)
                err = max(np.max(np.abs(R - Rh)), np.max(np.abs(Q - Qh)))
                worst = max(worst, err / tol)
                if err > tol:
                    bad.append((m, n, kappa, seed))
    assert record("C8 Householder oracle equivalence", not bad,
                  f"{runs - len(bad)}/{runs} runs with R and Q entrywise within 1e3 n u ||X||_2 (worst {worst:.1e} of tol)")


def test_c9_weyl_and_gram_bounds():
    rng = np.random.default_rng(20240)
    bad, worst_orth = [], 0.0
    for i in range(50):
        n = int(rng.integers(2, 31))
        m = int(rng.integers(n, 301))
        kappa = 10.0 ** (2 + 12 * i / 49)
        X = make_x(m, n, kappa, int(rng.integers(0, 2**31)))
        out = shifted_cholesky_qr(X)
        s = out.trace[0].shift_used
        lhs = jacobi_svd(out.R)[-1] ** 2
        rhs = jacobi_svd(X)[-1] ** 2 + 0.9 * s
        orth = spectral(gram(out.Q) - np.eye(n))
        worst_orth = max(worst_orth, orth)
        if not (lhs >= rhs and orth < 2):
            bad.append((m, n, kappa))
    assert record("C9 Weyl and Gram bounds", not bad,
                  f"{50 - len(bad)}/50 instances with sigma_n(R)^2 >= sigma_n(X)^2 + 0.9 s and "
                  f"||Q^T Q - I||_2 < 2 (max {worst_orth:.3f})")


def test_c10_blocked_spmm(tmp_path):
    files = []
    for k, shift in ((16, 0.0), (24, 0.1), (32, 1e-3)):
        p = tmp_path / f"lap{k}.mtx"
        write_matrix_market(p, laplacian_2d(k, shift))
        files.append(p)
    identical = True
    for p in files:
        S = read_matrix_market(p)
        B = Metric.sparse(S)
        for n in (16, 64):
            X = make_x(S.order, n, 1e8, seed=n)
            ys = [spmm_blocked(S, X, b) for b in (1, 8, n)]
            outs = [schol_qr3_b(X, B, block=b) for b in (1, 8, n)]
            identical &= all(np.array_equal(y, ys[0]) for y in ys)
            identical &= all(np.array_equal(o.Q, outs[0].Q) and np.array_equal(o.R, outs[0].R) for o in outs)
    S = read_matrix_market(files[-1])
    B = Metric.sparse(S)
    timing = []
    for n in (16, 64):
        X = make_x(S.order, n, 1e8, seed=n)
        t = time.perf_counter()
        schol_qr3_b(X, B)
        t1 = time.perf_counter() - t
        t = time.perf_counter()
        cgs2(X, B)
        t2 = time.perf_counter() - t
        timing.append(f"n={n}: sCholQR3 {t1 * 1e3:.1f} ms, CGS2 {t2 * 1e3:.1f} ms (CGS2/sCholQR3 time {t2 / t1:.2f})")
    assert record("C10 blocked SpMM self-consistency", identical,
                  f"block in {{1, 8, n}} bit-identical on 3 Laplacian files (orders 256, 576, 1024), n in {{16, 64}}; "
                  f"timing on order 1024 (recorded, not asserted): " + "; ".join(timing))

"""Command-line driver: single runs, resumable sweeps and the iteration tables.

Exit codes: 0 success, 1 I/O, parse or configuration error, 2 breakdown
(Cholesky or Gram-Schmidt rank deficiency), 3 non-convergence. CSV goes to
stdout or ``--out``; everything else goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, cholqr, oblique
from .cholqr import ShiftPolicy, compute_shift
from .dense import CholeskyBreakdown, JacobiConvergenceError, gram, householder_qr
from .metrics import cond2, measure, spectral_norm
from .oblique import IDENTITY, Metric, compute_shift_oblique
from .testgen import RandsvdSpec, child_seed, load_matrix, randsvd, random_spd

CSV_HEADER = (
    "algorithm,m,n,kappa_x,kappa_b,seed,shift,chol_calls,orth_f,orth_2,"
    "resid_rel,cond2_q,b_measure,status,wall_s"
).split(",")
KEY_FIELDS = ("algorithm", "m", "n", "kappa_x", "kappa_b", "seed")

ALGORITHMS = ("cholqr", "cholqr2", "scholqr", "scholqr3", "iterated",
              "cgs", "mgs", "cgs2", "mgs2", "householder")

EXIT_OK, EXIT_ERROR, EXIT_BREAKDOWN, EXIT_NONCONVERGED = 0, 1, 2, 3
_STATUS_EXIT = {"ok": EXIT_OK, "breakdown": EXIT_BREAKDOWN, "rank_deficient": EXIT_BREAKDOWN,
                "nonconverged": EXIT_NONCONVERGED, "error": EXIT_ERROR}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    algorithm: str
    m: int = 300
    n: int = 10
    kappa: float = 1e8
    seed: int = 1
    kappa_b: float | None = None
    matrix_file: str | None = None
    metric_file: str | None = None
    shift: str = "safe"
    block: int | None = None
    max_iter: int = 8

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.kappa_b is not None and self.metric_file is not None:
            raise ConfigError("--kappa-b and --metric-file are mutually exclusive")
        for p in (self.matrix_file, self.metric_file):
            if p is not None and not Path(p).is_file():
                raise ConfigError(f"no such file: {p}")
        ShiftPolicy.parse(self.shift)

    @property
    def has_metric(self) -> bool:
        return self.kappa_b is not None or self.metric_file is not None


# -- CSV --------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def format_row(row: dict) -> list[str]:
    return [_fmt(row.get(k)) for k in CSV_HEADER]


_INT_FIELDS = {"m", "n", "seed", "chol_calls"}
_STR_FIELDS = {"algorithm", "status"}


def parse_row(fields: dict) -> dict:
    """Inverse of :func:`format_row` on a ``csv.DictReader`` record."""
    out = {}
    for k in CSV_HEADER:
        v = fields[k]
        if k in _STR_FIELDS:
            out[k] = v
        elif v == "":
            out[k] = None
        elif k in _INT_FIELDS:
            out[k] = int(v)
        else:
            out[k] = float(v)
    return out


def row_key(row: dict) -> tuple[str, ...]:
    return tuple(_fmt(row.get(k)) for k in KEY_FIELDS)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected CSV header {reader.fieldnames}")
        return [parse_row(r) for r in reader]


# -- running one configuration ----------------------------------------------

def build_inputs(cfg: RunConfig) -> tuple[np.ndarray, Metric]:
    if cfg.matrix_file is not None:
        X = load_matrix(cfg.matrix_file)
    else:
        X = randsvd(RandsvdSpec(cfg.m, cfg.n, cfg.kappa, cfg.seed))
    if cfg.metric_file is not None:
        B = Metric.sparse(oblique.read_matrix_market(cfg.metric_file))
    elif cfg.kappa_b is not None:
        B = Metric.dense(random_spd(X.shape[0], cfg.kappa_b, child_seed(cfg.seed, 0)))
    else:
        B = IDENTITY
    if B.order is not None and B.order != X.shape[0]:
        raise ConfigError(f"metric order {B.order} does not match m={X.shape[0]}")
    return X, B


def factorize(algorithm: str, X, B: Metric = IDENTITY, policy: ShiftPolicy = cholqr.SAFE,
              block: int | None = None, max_iter: int = 8) -> cholqr.QrOutcome:
    """Dispatch by algorithm name; a non-identity ``B`` selects the oblique variant."""
    if B.is_identity:
        table = {
            "cholqr": lambda: cholqr.cholesky_qr(X),
            "cholqr2": lambda: cholqr.cholesky_qr2(X),
            "scholqr": lambda: cholqr.shifted_cholesky_qr(X, policy),
            "scholqr3": lambda: cholqr.schol_qr3(X, policy),
            "iterated": lambda: cholqr.iterated_cholesky_qr(X, policy, max_iter),
            "householder": lambda: cholqr.QrOutcome(*householder_qr(X), [cholqr.StepRecord(1)]),
        }
    else:
        table = {
            "cholqr": lambda: oblique.cholesky_qr_b(X, B, block),
            "cholqr2": lambda: oblique.cholesky_qr2_b(X, B, block),
            "scholqr": lambda: oblique.shifted_cholesky_qr_b(X, B, policy, block),
            "scholqr3": lambda: oblique.schol_qr3_b(X, B, policy, block),
        }
    gs = {"cgs": baselines.cgs, "mgs": baselines.mgs, "cgs2": baselines.cgs2, "mgs2": baselines.mgs2}
    if algorithm in gs:
        return gs[algorithm](X, B)
    if algorithm not in table:
        raise ConfigError(f"algorithm {algorithm!r} is not defined for B != I")
    return table[algorithm]()


def execute(cfg: RunConfig) -> dict:
    """Run one configuration and return its CSV row (never raises on numerical failure)."""
    X, B = build_inputs(cfg)
    m, n = X.shape
    row = {
        "algorithm": cfg.algorithm, "m": m, "n": n,
        "kappa_x": None if cfg.matrix_file else float(cfg.kappa),
        "kappa_b": None if cfg.kappa_b is None else float(cfg.kappa_b),
        "seed": cfg.seed, "shift": 0.0, "chol_calls": 0,
    }
    policy = ShiftPolicy.parse(cfg.shift)
    t0 = time.perf_counter()
    try:
        out = factorize(cfg.algorithm, X, B, policy, cfg.block, cfg.max_iter)
    except CholeskyBreakdown as exc:
        trace = exc.trace or []
        row.update(status="breakdown", wall_s=time.perf_counter() - t0,
                   shift=max([r.shift_used for r in trace], default=0.0),
                   chol_calls=sum(1 + r.breakdown_retried for r in trace) + 1)
        print(f"breakdown: {exc}", file=sys.stderr)
        return row
    except baselines.RankDeficiencyError as exc:
        row.update(status="rank_deficient", wall_s=time.perf_counter() - t0)
        print(f"rank deficiency: {exc}", file=sys.stderr)
        return row
    row["wall_s"] = time.perf_counter() - t0
    uses_cholesky = cfg.algorithm not in ("cgs", "mgs", "cgs2", "mgs2", "householder")
    row["chol_calls"] = out.cholesky_calls if uses_cholesky else 0
    row["shift"] = max(out.shifts, default=0.0)
    try:
        rep = measure(X, out.Q, out.R, B, out)
    except JacobiConvergenceError as exc:
        row["status"] = "nonconverged"
        print(f"measurement failed: {exc}", file=sys.stderr)
        return row
    row.update(orth_f=rep.orthogonality_F, orth_2=rep.orthogonality_2, resid_rel=rep.residual_rel,
               cond2_q=rep.cond2_Q, b_measure=rep.b_measure,
               status="ok" if out.converged else "nonconverged")
    return row


def _execute_safe(cfg: RunConfig) -> dict:
    # sweep worker: any failure becomes a status row
    try:
        return execute(cfg)
    except Exception as exc:  # noqa: BLE001
        print(f"{cfg}: {exc}", file=sys.stderr)
        return {"algorithm": cfg.algorithm, "m": cfg.m, "n": cfg.n, "kappa_x": float(cfg.kappa),
                "kappa_b": None if cfg.kappa_b is None else float(cfg.kappa_b),
                "seed": cfg.seed, "status": "error"}


# -- argument handling -------------------------------------------------------

def _int_list(text: str) -> list[int]:
    """``1,2,5`` or an inclusive range ``1:3``."""
    out = []
    for part in str(text).split(","):
        if ":" in part:
            a, b = part.split(":")
            out.extend(range(int(a), int(b) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _float_list(text: str) -> list[float]:
    """``1e8,1e10`` or a decade range ``1e8:1e15``."""
    out = []
    for part in str(text).split(","):
        if ":" in part:
            a, b = (float(t) for t in part.split(":"))
            lo, hi = round(math.log10(a)), round(math.log10(b))
            out.extend(10.0**k for k in range(lo, hi + 1))
        elif part.strip():
            out.append(float(part))
    return out


def read_config(path) -> list[str]:
    """A ``key = value`` file as argv tokens; ``#`` starts a comment."""
    argv = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        argv += ["--" + key.replace("_", "-"), value]
    return argv


def _common(p: argparse.ArgumentParser, lists: bool) -> None:
    p.add_argument("--config", help="key=value file; command-line flags win")
    p.add_argument("--algo", default="scholqr3", help="algorithm" + (" list" if lists else ""))
    p.add_argument("--m", default="300")
    p.add_argument("--n", default="10")
    p.add_argument("--kappa", default="1e8", help="kappa_2(X)" + (" list or decade range a:b" if lists else ""))
    p.add_argument("--kappa-b", default=None, help="kappa_2(B) of a random dense SPD metric")
    p.add_argument("--seed", default="1", help="seed" + (" list or range a:b" if lists else ""))
    p.add_argument("--metric-file", default=None, help="Matrix Market SPD metric")
    p.add_argument("--shift", default="safe", help="safe | frob | none | fixed:<value>")
    p.add_argument("--block", type=int, default=None, help="SpMM column block")
    p.add_argument("--max-iter", type=int, default=8, help="iteration cap of the iterated algorithm")
    p.add_argument("--out", default=None, help="CSV output path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scholqr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one algorithm on one matrix")
    _common(run, lists=False)
    run.add_argument("--matrix-file", default=None, help="binary dump or Matrix Market array")
    sweep = sub.add_parser("sweep", help="cross-product grid, resumable")
    _common(sweep, lists=True)
    sweep.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    table = sub.add_parser("table", help="per-iteration table of the iterated methods")
    table.add_argument("which", choices=("table1", "table2", "table3"))
    table.add_argument("--config")
    table.add_argument("--seed", default="1")
    table.add_argument("--out", default=None)
    return ap


def _expand_config(argv: list[str]) -> list[str]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or not argv:
        return argv
    # config tokens go right after the subcommand so later flags override them
    return argv[:1] + read_config(known.config) + argv[1:]


def _seed_override(text: str) -> str:
    env = os.environ.get("CHOLQR_SEED")
    return env if env not in (None, "") else text


def _write_rows(rows, out: str | None, append: bool = False) -> None:
    if out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(format_row(r))
        return
    new = not (append and Path(out).exists())
    with open(out, "w" if new else "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(format_row(r))


def cmd_run(args) -> int:
    cfg = RunConfig(
        algorithm=args.algo, m=int(args.m), n=int(args.n), kappa=float(args.kappa),
        seed=int(_seed_override(args.seed)),
        kappa_b=None if args.kappa_b is None else float(args.kappa_b),
        matrix_file=args.matrix_file, metric_file=args.metric_file,
        shift=args.shift, block=args.block, max_iter=args.max_iter,
    )
    row = execute(cfg)
    _write_rows([row], args.out)
    return _STATUS_EXIT[row["status"]]


def sweep_grid(args) -> list[RunConfig]:
    kb = [None] if args.kappa_b is None else _float_list(args.kappa_b)
    grid = itertools.product(
        [a.strip() for a in args.algo.split(",") if a.strip()], _int_list(args.m), _int_list(args.n),
        _float_list(args.kappa), kb, _int_list(_seed_override(args.seed)),
    )
    return [RunConfig(a, m, n, k, s, b, None, args.metric_file, args.shift, args.block, args.max_iter)
            for a, m, n, k, b, s in grid]


def cmd_sweep(args) -> int:
    if args.out is None:
        raise ConfigError("sweep needs --out (the file is also the resume state)")
    cells = sweep_grid(args)
    if not cells:
        raise ConfigError("empty grid")
    done = set()
    if Path(args.out).exists():
        done = {row_key(r) for r in read_csv(args.out)}
    todo = [c for c in cells if _cell_key(c) not in done]
    print(f"{len(cells)} cells, {len(cells) - len(todo)} already present", file=sys.stderr)
    jobs = args.jobs or os.cpu_count() or 1
    if not Path(args.out).exists():
        _write_rows([], args.out)
    if jobs <= 1 or len(todo) <= 1:
        results = map(_execute_safe, todo)
        _append_each(results, args.out)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            _append_each(pool.map(_execute_safe, todo), args.out)
    return EXIT_OK


def _cell_key(c: RunConfig) -> tuple[str, ...]:
    return row_key({"algorithm": c.algorithm, "m": c.m, "n": c.n, "kappa_x": float(c.kappa),
                    "kappa_b": None if c.kappa_b is None else float(c.kappa_b), "seed": c.seed})


def _append_each(rows, out: str) -> None:
    # one writer; each row is flushed so an interrupted sweep resumes cleanly
    with open(out, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in rows:
            w.writerow(format_row(r))
            fh.flush()


# -- tables -------------------------------------------------------------------

TABLES = {
    "table1": dict(m=1000, n=30, kappa=1e12),
    "table2": dict(m=100, n=100, kappa=1e13),
    "table3": dict(m=300, n=30, kappa=1e12, kappa_b=1e8),
}


def table_rows(which: str, seed: int = 1) -> list[dict]:
    """Per-iteration rows ``k, cond2_q, orth_2, sqrt_alpha`` for one table layout.

    For table3 ``cond2_q`` holds the B-orthonormality measure and the last
    column is ``sqrt(alpha kappa_2(B))``.
    """
    p = TABLES[which]
    cfg = RunConfig("scholqr3" if "kappa_b" in p else "iterated", seed=seed, **p)
    X, B = build_inputs(cfg)
    m, n = X.shape
    rows = []
    if B.is_identity:
        alpha = compute_shift(m, n, 1.0)

        def record(k, Q, rec):
            orth2 = spectral_norm(gram(Q) - np.eye(n))
            rows.append(dict(k=k, cond2_q=cond2(Q), orth_2=orth2,
                             sqrt_alpha=math.sqrt(alpha) if rec.shift_used > 0 else None))

        cholqr.iterated_cholesky_qr(X, callback=record)
        return rows
    alpha = compute_shift_oblique(m, n, 1.0, 1.0)
    kappa_b = p["kappa_b"]
    out = oblique.shifted_cholesky_qr_b(X, B)
    Q = out.Q
    for k in (1, 2, 3):
        if k > 1:
            Q = oblique.cholesky_qr_b(Q, B).Q
        rep = measure(Q, Q, np.eye(n), B)
        rows.append(dict(k=k, cond2_q=rep.b_measure, orth_2=rep.orthogonality_2,
                         sqrt_alpha=math.sqrt(alpha * kappa_b) if k == 1 else None))
    return rows


def cmd_table(args) -> int:
    seed = int(_seed_override(args.seed))
    rows = table_rows(args.which, seed)
    head = "b_measure" if args.which == "table3" else "kappa2(Q)"
    tail = "sqrt(alpha*kappa_b)" if args.which == "table3" else "sqrt(alpha)"
    print(f"{args.which}: {TABLES[args.which]}, seed={seed}", file=sys.stderr)
    print(f"{'k':>2}  {head:>12}  {'||G-I||_2':>12}  {tail:>20}", file=sys.stderr)
    for r in rows:
        sa = "-" if r["sqrt_alpha"] is None else f"{r['sqrt_alpha']:.3g}"
        print(f"{r['k']:>2}  {r['cond2_q']:>12.3g}  {r['orth_2']:>12.3g}  {sa:>20}", file=sys.stderr)
    fields = ["k", "cond2_q", "orth_2", "sqrt_alpha"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_expand_config(argv))
        return {"run": cmd_run, "sweep": cmd_sweep, "table": cmd_table}[args.command](args)
    except SystemExit as exc:
        # argparse usage errors
        return EXIT_ERROR if exc.code not in (0, None) else EXIT_OK
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

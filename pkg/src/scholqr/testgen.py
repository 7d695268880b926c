"""Seeded test matrices with planted spectra, plus matrix serialization.

The random stream is numpy's PCG64 bit generator; normal variates are made
by Box-Muller from its 53-bit uniform doubles so the stream is defined by
two documented algorithms only (no ziggurat tables).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dense import householder_qr

MAGIC = b"SCHQRMAT"
_HEADER = struct.Struct("<8sII")


@dataclass(frozen=True)
class RandsvdSpec:
    m: int
    n: int
    kappa: float
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < self.n:
            raise ValueError(f"need m >= n >= 1, got m={self.m}, n={self.n}")
        if not self.kappa >= 1.0:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")
        if 1.0 / self.kappa < np.finfo(np.float64).tiny:
            raise ValueError(f"kappa={self.kappa:g} underflows the smallest singular value")


def make_rng(seed: int) -> np.random.Generator:
    """A PCG64 generator; child streams come from ``SeedSequence.spawn``."""
    return np.random.Generator(np.random.PCG64(seed))


def child_seed(seed: int, index: int) -> int:
    """A 64-bit seed for the ``index``-th independent child stream of ``seed``."""
    return int(np.random.SeedSequence(seed).spawn(index + 1)[index].generate_state(1, np.uint64)[0])


def box_muller(rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` standard normal variates from pairs of 53-bit uniforms."""
    k = (size + 1) // 2
    u1 = 1.0 - rng.random(k)  # (0, 1], keeps log finite
    u2 = rng.random(k)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * k)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:size]


def normal_matrix(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    # filled column by column so the stream maps to column-major order
    return box_muller(rng, m * n).reshape(n, m).T.copy()


def planted_spectrum(n: int, kappa: float) -> np.ndarray:
    """``1, sigma^(1/(n-1)), ..., sigma`` with ``sigma = 1/kappa``."""
    if n == 1:
        return np.ones(1)
    return (1.0 / kappa) ** (np.arange(n) / (n - 1))


def random_orthonormal(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    Q, _ = householder_qr(normal_matrix(rng, m, n))
    return Q


def randsvd(spec: RandsvdSpec) -> np.ndarray:
    """``X = U diag(sigma) V^T`` with ``||X||_2 = 1`` and ``kappa_2(X) = kappa``."""
    rng = make_rng(spec.seed)
    U = random_orthonormal(rng, spec.m, spec.n)
    V = random_orthonormal(rng, spec.n, spec.n)
    return (U * planted_spectrum(spec.n, spec.kappa)) @ V.T


def random_spd(m: int, kappa: float, seed: int = 0) -> np.ndarray:
    """Dense SPD ``B = U diag(lambda) U^T`` with eigenvalues from 1 down to 1/kappa.

    The result is exactly symmetric: the upper triangle is mirrored.
    """
    RandsvdSpec(m, m, kappa, seed)  # validation only
    rng = make_rng(seed)
    U = random_orthonormal(rng, m, m)
    B = (U * planted_spectrum(m, kappa)) @ U.T
    return np.triu(B) + np.triu(B, 1).T


# -- serialization ---------------------------------------------------------

def write_binary(path, X: np.ndarray) -> None:
    """Header ``MAGIC, m, n`` (16 bytes, little-endian) then column-major float64."""
    X = np.asarray(X, dtype=np.float64)
    m, n = X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, m, n))
        fh.write(np.asfortranarray(X).astype("<f8").tobytes(order="F"))


def read_binary(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, m, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = data[_HEADER.size :]
    if len(body) != 8 * m * n:
        raise ValueError(f"{path}: expected {8 * m * n} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape((m, n), order="F").astype(np.float64)


def write_mm_array(path, X: np.ndarray) -> None:
    """Matrix Market dense ``array real general`` (column-major, lossless repr)."""
    X = np.asarray(X, dtype=np.float64)
    m, n = X.shape
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{m} {n}\n")
        for v in X.ravel(order="F"):
            fh.write(f"{float(v)!r}\n")


def read_mm_array(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 5 or header[0].lower() != "%%matrixmarket" or header[2].lower() != "array":
            raise ValueError(f"{path}: not a Matrix Market array file")
        if header[3].lower() != "real" or header[4].lower() != "general":
            raise ValueError(f"{path}: only 'array real general' is supported")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        m, n = (int(t) for t in line.split())
        vals = np.array([float(t) for t in fh.read().split()])
    if vals.size != m * n:
        raise ValueError(f"{path}: expected {m * n} values, found {vals.size}")
    return vals.reshape((m, n), order="F")


def load_matrix(path) -> np.ndarray:
    """Read either the binary dump or a Matrix Market array file."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return read_binary(path)
    return read_mm_array(path)

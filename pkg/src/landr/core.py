"""Scalar-generic vector kernels, operator abstraction, and instrumentation.

Everything length-n that a solver does goes through the counted helpers in
this module (``dot``, ``axpy``, ``norm2``, ``block_*``) so that matvec and
vector-op totals reported by the harness mean the same thing across solvers.
A vector op is one length-n operation (a dot, an axpy, a scale); small-matrix
work is never counted.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from . import _kernels

EPS = float(np.finfo(np.float64).eps)

REAL = np.float64
COMPLEX = np.complex128


class DimensionError(ValueError):
    """Raised on operator/vector shape mismatch."""


class ScalarKindError(TypeError):
    """Raised when mixing real and complex operands in one solve."""


# ------------------------------------------------------------------- counters


class Counters:
    """Process-global matvec / vector-op counters.

    Increments are lock-guarded so concurrent solves on shared operators
    keep exact totals; reset happens only through an explicit call.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.matvecs = 0
        self.vecops = 0

    def add_matvecs(self, n: int = 1) -> None:
        with self._lock:
            self.matvecs += n

    def add_vecops(self, n: int = 1) -> None:
        with self._lock:
            self.vecops += n

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.matvecs, self.vecops

    def reset(self) -> None:
        with self._lock:
            self.matvecs = 0
            self.vecops = 0


counters = Counters()


# ------------------------------------------------------------------------ rng


class Rng:
    """Seedable splittable generator used for every random draw in the repo.

    Streams come from numpy's PCG64 seeded through a SeedSequence (64-bit
    seeds, spawnable).  Normal(0,1) samples are produced by Box-Muller on the
    uniform stream, so a seed pins every experiment exactly.
    """

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed))
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    def split(self) -> "Rng":
        """Child generator with an independent stream."""
        return Rng(self._seq.spawn(1)[0])

    def uniform(self, size: int) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size: int) -> np.ndarray:
        half = (size + 1) // 2
        u1 = 1.0 - self._gen.random(half)  # (0, 1]: keeps log finite
        u2 = self._gen.random(half)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return z[:size]

    def normal_complex(self, size: int) -> np.ndarray:
        z = self.normal(2 * size)
        return (z[:size] + 1j * z[size:]) / np.sqrt(2.0)


# ------------------------------------------------------------ counted kernels


def dot(u: np.ndarray, v: np.ndarray):
    """Conjugate-linear inner product <u, v>; counts one vector op."""
    if u.shape != v.shape:
        raise DimensionError(f"dot: {u.shape} vs {v.shape}")
    counters.add_vecops(1)
    return _kernels.dot(u, v)


def norm2(v: np.ndarray) -> float:
    counters.add_vecops(1)
    return _kernels.norm2(v)


def axpy(a, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """y += a*x in place; counts one vector op."""
    if x.shape != y.shape:
        raise DimensionError(f"axpy: {x.shape} vs {y.shape}")
    counters.add_vecops(1)
    return _kernels.axpy(a, x, y)


def scale(a, x: np.ndarray) -> np.ndarray:
    """x *= a in place; counts one vector op."""
    counters.add_vecops(1)
    x *= a
    return x


def count_vecops(n: int) -> None:
    """Charge n length-n operations done through a blocked numpy call."""
    counters.add_vecops(n)


def block_dot(V: np.ndarray, w: np.ndarray) -> np.ndarray:
    """V^H w for an n x p block; counts p vector ops."""
    p = V.shape[1]
    counters.add_vecops(p)
    return V.conj().T @ w


def block_axpy(V: np.ndarray, c: np.ndarray, w: np.ndarray) -> np.ndarray:
    """w -= V c; counts p vector ops."""
    counters.add_vecops(V.shape[1])
    w -= V @ c
    return w


# -------------------------------------------------------------- measurements


def orthodefect(V: np.ndarray) -> float:
    """2-norm of V^H V - I.  Measurement only: not counted."""
    if V.ndim != 2 or V.shape[1] == 0:
        raise DimensionError("orthodefect needs a nonempty 2-d block")
    G = V.conj().T @ V
    G[np.diag_indices_from(G)] -= 1.0
    return float(np.linalg.norm(G, 2))


# ------------------------------------------------------------------ operators


class LinearOperator:
    """Apply-only Hermitian operator of dimension n.

    ``apply`` must be deterministic within a process run and safe to call
    concurrently.  Every apply counts one matvec.
    """

    kind = "abstract"

    def __init__(self, n: int, dtype):
        self.n = int(n)
        self.dtype = np.dtype(dtype)
        self.hermitian = True

    def _check(self, v: np.ndarray) -> None:
        if v.shape != (self.n,):
            raise DimensionError(f"operator dim {self.n}, vector shape {v.shape}")
        if (v.dtype.kind == "c") != (self.dtype.kind == "c"):
            raise ScalarKindError(
                f"operator scalar kind {self.dtype} vs vector {v.dtype}"
            )

    def apply(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)


class DiagonalOperator(LinearOperator):
    kind = "diagonal"

    def __init__(self, diag: np.ndarray):
        diag = np.asarray(diag)
        if diag.dtype.kind == "c":
            if np.max(np.abs(diag.imag)) > 0:
                raise ValueError("Hermitian diagonal must be real")
            diag = diag.real
        diag = diag.astype(REAL)
        super().__init__(diag.shape[0], REAL)
        self.diag = diag

    def apply(self, v: np.ndarray) -> np.ndarray:
        self._check(v)
        counters.add_matvecs(1)
        if v.dtype.kind == "c":
            return self.diag * v
        return _kernels.diag_matvec(self.diag, v)

    def _check(self, v):
        if v.shape != (self.n,):
            raise DimensionError(f"operator dim {self.n}, vector shape {v.shape}")


class CsrOperator(LinearOperator):
    """Hermitian matrix in CSR storage."""

    kind = "csr"

    def __init__(self, data, indices, indptr, n: int, kind: str = "csr"):
        data = np.asarray(data)
        dtype = COMPLEX if data.dtype.kind == "c" else REAL
        super().__init__(n, dtype)
        self.data = data.astype(dtype)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        if self.indptr.shape[0] != n + 1:
            raise DimensionError("indptr length must be n + 1")
        self.kind = kind

    @classmethod
    def from_dense(cls, A: np.ndarray) -> "CsrOperator":
        A = np.asarray(A)
        n = A.shape[0]
        data, indices, indptr = [], [], [0]
        for i in range(n):
            (cols,) = np.nonzero(A[i])
            indices.extend(cols.tolist())
            data.extend(A[i, cols].tolist())
            indptr.append(len(indices))
        dtype = COMPLEX if A.dtype.kind == "c" else REAL
        return cls(np.array(data, dtype=dtype), indices, indptr, n)

    @classmethod
    def from_diagonal(cls, diag: np.ndarray) -> "CsrOperator":
        diag = np.asarray(diag, dtype=REAL)
        n = diag.shape[0]
        idx = np.arange(n, dtype=np.int64)
        return cls(diag.copy(), idx, np.arange(n + 1, dtype=np.int64), n)

    def apply(self, v: np.ndarray) -> np.ndarray:
        self._check(v)
        counters.add_matvecs(1)
        return _kernels.csr_matvec(self.data, self.indices, self.indptr, v)


def check_hermitian(op: LinearOperator, rng: Rng, probes: int = 20, anorm: float | None = None) -> float:
    """Max |<Au,v> - <u,Av>| / (|A| |u| |v|) over random probe pairs.

    Validation helper; uses raw numpy so it does not disturb the counters'
    meaning for the enclosing experiment (matvecs still count).
    """
    worst = 0.0
    for _ in range(probes):
        if op.dtype.kind == "c":
            u = rng.normal_complex(op.n)
            v = rng.normal_complex(op.n)
        else:
            u = rng.normal(op.n)
            v = rng.normal(op.n)
        au = op.apply(u)
        av = op.apply(v)
        scale_ = (anorm or max(np.linalg.norm(au) / np.linalg.norm(u), EPS)) * np.linalg.norm(u) * np.linalg.norm(v)
        worst = max(worst, abs(np.vdot(au, v) - np.vdot(u, av)) / scale_)
    return worst


@dataclass(frozen=True)
class OpCounts:
    """Matvec/vecop usage of one bounded piece of work."""

    matvecs: int
    vecops: int


class CountingScope:
    """Record the counter deltas produced inside a with-block."""

    def __enter__(self):
        self._m0, self._v0 = counters.snapshot()
        return self

    def __exit__(self, *exc):
        m1, v1 = counters.snapshot()
        self.counts = OpCounts(m1 - self._m0, v1 - self._v0)
        return False

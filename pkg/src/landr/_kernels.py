"""Hot numeric kernels: numba fast lane with a pure-numpy fallback.

The lane is picked once at import from the env var ``LANDR_BACKEND``
(``numba`` or ``numpy``; default numba when importable) and can be switched
at runtime with :func:`set_backend`.  ``benchmarks/bench_kernels.py`` times
the two lanes against each other.

Only the loopy length-n kernels live here (matvecs, BLAS-1).  Block
projections stay on numpy matmul in both lanes: those calls land in BLAS,
which a naive jitted loop does not beat.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    _HAVE_NUMBA = False


# ----------------------------------------------------------------- numpy lane


def _np_diag_matvec(d, x):
    return d * x


def _np_csr_matvec(data, indices, indptr, x):
    # per-row segment sums; reduceat over the nonempty rows only, so rows
    # never contaminate each other (a cumsum difference would cancel badly)
    prod = data * x[indices]
    n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=prod.dtype)
    nz = np.flatnonzero(np.diff(indptr) > 0)
    if nz.size:
        out[nz] = np.add.reduceat(prod, indptr[nz])
    return out


def _np_dot(u, v):
    return np.vdot(u, v)


def _np_norm2(v):
    return float(np.linalg.norm(v))


def _np_axpy(a, x, y):
    y += a * x
    return y


# ----------------------------------------------------------------- numba lane

if _HAVE_NUMBA:

    @njit(cache=True)
    def _nb_diag_matvec(d, x, out):
        for i in range(x.shape[0]):
            out[i] = d[i] * x[i]

    @njit(cache=True)
    def _nb_csr_matvec(data, indices, indptr, x, out):
        for i in range(indptr.shape[0] - 1):
            s = out[i]
            for jj in range(indptr[i], indptr[i + 1]):
                s += data[jj] * x[indices[jj]]
            out[i] = s

    @njit(cache=True)
    def _nb_dot_real(u, v):
        s = 0.0
        for i in range(u.shape[0]):
            s += u[i] * v[i]
        return s

    @njit(cache=True)
    def _nb_dot_complex(u, v):
        s = 0.0 + 0.0j
        for i in range(u.shape[0]):
            s += u[i].conjugate() * v[i]
        return s

    @njit(cache=True)
    def _nb_norm2_real(v):
        s = 0.0
        for i in range(v.shape[0]):
            s += v[i] * v[i]
        return np.sqrt(s)

    @njit(cache=True)
    def _nb_norm2_complex(v):
        s = 0.0
        for i in range(v.shape[0]):
            s += v[i].real * v[i].real + v[i].imag * v[i].imag
        return np.sqrt(s)

    @njit(cache=True)
    def _nb_axpy(a, x, y):
        for i in range(x.shape[0]):
            y[i] += a * x[i]


def _nb_diag_matvec_wrap(d, x):
    out = np.empty_like(x)
    _nb_diag_matvec(d, x, out)
    return out


def _nb_csr_matvec_wrap(data, indices, indptr, x):
    out = np.zeros(indptr.shape[0] - 1, dtype=x.dtype)
    _nb_csr_matvec(data, indices, indptr, x, out)
    return out


def _nb_dot_wrap(u, v):
    if u.dtype.kind == "c":
        return _nb_dot_complex(u, v)
    return _nb_dot_real(u, v)


def _nb_norm2_wrap(v):
    if v.dtype.kind == "c":
        return float(_nb_norm2_complex(v))
    return float(_nb_norm2_real(v))


def _nb_axpy_wrap(a, x, y):
    _nb_axpy(a, x, y)
    return y


# ------------------------------------------------------------------ dispatch

_LANES = {
    "numpy": {
        "diag_matvec": _np_diag_matvec,
        "csr_matvec": _np_csr_matvec,
        "dot": _np_dot,
        "norm2": _np_norm2,
        "axpy": _np_axpy,
    },
}
if _HAVE_NUMBA:
    _LANES["numba"] = {
        "diag_matvec": _nb_diag_matvec_wrap,
        "csr_matvec": _nb_csr_matvec_wrap,
        "dot": _nb_dot_wrap,
        "norm2": _nb_norm2_wrap,
        "axpy": _nb_axpy_wrap,
    }

_active_name = None
diag_matvec = None
csr_matvec = None
dot = None
norm2 = None
axpy = None


def set_backend(name: str) -> None:
    """Select the kernel lane ("numba" or "numpy") for this process."""
    global _active_name, diag_matvec, csr_matvec, dot, norm2, axpy
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    lane = _LANES[name]
    _active_name = name
    diag_matvec = lane["diag_matvec"]
    csr_matvec = lane["csr_matvec"]
    dot = lane["dot"]
    norm2 = lane["norm2"]
    axpy = lane["axpy"]


def get_backend() -> str:
    return _active_name


def _default_backend() -> str:
    env = os.environ.get("LANDR_BACKEND", "").strip().lower()
    if env in ("numba", "numpy"):
        if env == "numba" and not _HAVE_NUMBA:
            warnings.warn("LANDR_BACKEND=numba but numba is unavailable; using numpy")
            return "numpy"
        return env
    if env:
        warnings.warn(f"ignoring unknown LANDR_BACKEND={env!r}")
    return "numba" if _HAVE_NUMBA else "numpy"


set_backend(_default_backend())

"""Matrix Market ingestion for file-backed operators.

Accepts coordinate and array formats with ``symmetric`` or ``hermitian``
headers; the stored triangle is expanded so the operator applies the full
matrix.  Parsing is delegated to scipy.io; this module owns validation and
conversion into the package's CSR operator.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse

from .core import COMPLEX, REAL, CsrOperator


class MatrixMarketError(ValueError):
    pass


def load_operator(path: str, require_hermitian: bool = True) -> CsrOperator:
    """Read a Matrix Market file into a Hermitian CSR operator."""
    try:
        info = scipy.io.mminfo(path)
    except Exception as exc:
        raise MatrixMarketError(f"cannot parse {path}: {exc}") from exc
    rows, cols, _entries, _fmt, field, symmetry = info
    if rows != cols:
        raise MatrixMarketError(f"{path}: matrix is {rows}x{cols}, need square")
    if require_hermitian and symmetry not in ("symmetric", "hermitian"):
        raise MatrixMarketError(
            f"{path}: symmetry is {symmetry!r}; need symmetric or hermitian"
        )
    if field not in ("real", "integer", "complex"):
        raise MatrixMarketError(f"{path}: unsupported field {field!r}")

    mat = scipy.io.mmread(path)  # triangle already expanded per the header
    if scipy.sparse.issparse(mat):
        csr = mat.tocsr()
    else:
        csr = scipy.sparse.csr_matrix(np.asarray(mat))
    dtype = COMPLEX if csr.dtype.kind == "c" else REAL
    csr = csr.astype(dtype)
    csr.sum_duplicates()
    return CsrOperator(csr.data, csr.indices, csr.indptr, csr.shape[0], kind="external")

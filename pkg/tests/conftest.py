import numpy as np
import pytest

from landr import CsrOperator, DiagonalOperator, Rng, counters


@pytest.fixture(autouse=True)
def _fresh_counters():
    counters.reset()
    yield


@pytest.fixture
def rng():
    return Rng(20240817)


@pytest.fixture
def small_spd():
    """diag(1..60), the workhorse for dense-oracle comparisons."""
    return DiagonalOperator(np.arange(1.0, 61.0))


def random_hermitian_csr(n: int, seed: int, complex_entries: bool = True,
                         density: float = 0.15) -> CsrOperator:
    """Dense-built random Hermitian matrix in CSR form (test sizes only)."""
    gen = np.random.Generator(np.random.PCG64(seed))
    if complex_entries:
        A = gen.normal(size=(n, n)) + 1j * gen.normal(size=(n, n))
    else:
        A = gen.normal(size=(n, n))
    mask = gen.random((n, n)) < density
    A = np.where(mask, A, 0)
    A = 0.5 * (A + A.conj().T)
    A[np.diag_indices(n)] = gen.normal(size=n) + 3.0  # keep it comfortably bounded
    return CsrOperator.from_dense(A)

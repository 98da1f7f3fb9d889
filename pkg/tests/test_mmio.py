"""Matrix Market ingestion: symmetric/hermitian triangles, both formats."""

import numpy as np
import pytest

from landr import MatrixMarketError, load_operator


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_coordinate_real_symmetric_expands_triangle(tmp_path):
    path = _write(tmp_path, "s.mtx", """%%MatrixMarket matrix coordinate real symmetric
3 3 4
1 1 2.0
2 2 3.0
3 3 4.0
2 1 0.5
""")
    op = load_operator(path)
    assert op.n == 3 and op.kind == "external"
    A = np.column_stack([op.apply(np.eye(3)[:, j]) for j in range(3)])
    expected = np.array([[2.0, 0.5, 0.0], [0.5, 3.0, 0.0], [0.0, 0.0, 4.0]])
    assert np.array_equal(A, expected)


def test_coordinate_complex_hermitian_conjugates(tmp_path):
    path = _write(tmp_path, "h.mtx", """%%MatrixMarket matrix coordinate complex hermitian
2 2 3
1 1 2.0 0.0
2 2 3.0 0.0
2 1 0.5 -1.0
""")
    op = load_operator(path)
    e1 = np.array([1.0 + 0j, 0.0 + 0j])
    e2 = np.array([0.0 + 0j, 1.0 + 0j])
    col1 = op.apply(e1)
    col2 = op.apply(e2)
    assert col1[1] == 0.5 - 1.0j      # stored lower-triangle entry
    assert col2[0] == 0.5 + 1.0j      # expanded conjugate
    assert col1[0] == 2.0 and col2[1] == 3.0


def test_array_format_symmetric(tmp_path):
    path = _write(tmp_path, "a.mtx", """%%MatrixMarket matrix array real symmetric
2 2
1.0
0.25
5.0
""")
    op = load_operator(path)
    v = np.array([1.0, 2.0])
    assert np.allclose(op.apply(v), np.array([1.5, 10.25]))


def test_general_symmetry_rejected(tmp_path):
    path = _write(tmp_path, "g.mtx", """%%MatrixMarket matrix coordinate real general
2 2 2
1 1 1.0
2 2 1.0
""")
    with pytest.raises(MatrixMarketError):
        load_operator(path)
    op = load_operator(path, require_hermitian=False)
    assert op.n == 2


def test_nonsquare_rejected(tmp_path):
    path = _write(tmp_path, "r.mtx", """%%MatrixMarket matrix coordinate real general
2 3 1
1 1 1.0
""")
    with pytest.raises(MatrixMarketError):
        load_operator(path, require_hermitian=False)


def test_malformed_file_rejected(tmp_path):
    path = _write(tmp_path, "bad.mtx", "not a matrix market file\n")
    with pytest.raises(MatrixMarketError):
        load_operator(path)


def test_loaded_operator_drives_a_solve(tmp_path, rng):
    # small Hermitian system through the full pipeline
    n = 6
    gen = np.random.Generator(np.random.PCG64(2))
    A = gen.normal(size=(n, n)) + 1j * gen.normal(size=(n, n))
    A = 0.5 * (A + A.conj().T) + 10 * np.eye(n)
    lines = [f"%%MatrixMarket matrix coordinate complex hermitian\n{n} {n} {n*(n+1)//2}"]
    for i in range(n):
        for j in range(i + 1):
            lines.append(f"{i+1} {j+1} {A[i, j].real:.17g} {A[i, j].imag:.17g}")
    path = _write(tmp_path, "solve.mtx", "\n".join(lines) + "\n")
    op = load_operator(path)
    from landr import minres

    b = rng.normal_complex(n)
    x, hist = minres(op, b, rtol=1e-12)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)

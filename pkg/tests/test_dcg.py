"""Deflation projection, the CG baseline, and deflated CG."""

import numpy as np
import pytest

from landr import (
    DeflationSpace,
    DiagonalOperator,
    IndefiniteOperatorError,
    SolutionCache,
    SolverConfig,
    cg,
    d_cg,
    deflation_project,
    lan_dr,
    set_backend,
    get_backend,
)
from landr.harness import MatrixRecipe, generate, make_rhs
from landr.reorth import k_so


def _empty_ds(n):
    V = np.zeros((n, 1))
    V[0, 0] = 1.0
    return DeflationSpace(V, np.zeros((1, 0)))


@pytest.fixture
def example1_ds(rng):
    op = generate(MatrixRecipe("example1", 2000))
    b = rng.normal(2000)
    cfg = SolverConfig(m=60, k=20, lin_rtol=1e-30, eig_rtol=1e-30,
                      max_cycles=25, reorth_policy=k_so())
    res = lan_dr(op, b, None, cfg)
    return op, res


# ----------------------------------------------------------------- projection


def test_projection_of_orthogonal_residual_is_noop(example1_ds, rng):
    op, res = example1_ds
    ds = res.deflation
    r0 = rng.normal(op.n)
    r0 -= ds.V[:, : ds.k] @ (ds.V[:, : ds.k].T @ r0)
    x0 = np.zeros(op.n)
    x, r = deflation_project(ds, x0, r0)
    assert np.allclose(x, x0, atol=1e-12)
    assert np.linalg.norm(r - r0) <= 1e-10 * np.linalg.norm(r0)


def test_projection_annihilates_converged_ritz_vector(example1_ds):
    op, res = example1_ds
    ds = res.deflation
    i = int(np.argmin(res.ritz.resnorms))
    y = ds.V[:, i].copy()
    x, r = deflation_project(ds, np.zeros(op.n), y)
    assert abs(y @ r) <= 1e-12
    assert np.linalg.norm(r) <= 1e-6  # converged direction nearly removed


def test_projection_galerkin_orthogonality(example1_ds, rng):
    op, res = example1_ds
    ds = res.deflation
    r0 = rng.normal(op.n)
    x, r = deflation_project(ds, np.zeros(op.n), r0)
    assert np.max(np.abs(ds.V[:, : ds.k].T @ r)) <= 1e-12 * np.linalg.norm(r0)


def test_projection_uses_no_matvecs(example1_ds, rng):
    from landr import counters

    op, res = example1_ds
    counters.reset()
    deflation_project(res.deflation, np.zeros(op.n), rng.normal(op.n))
    assert counters.snapshot()[0] == 0


def test_projection_excludes_zero_ritz_value():
    V = np.zeros((4, 3))
    V[:3, :3] = np.eye(3)
    tbar = np.zeros((3, 2))
    tbar[0, 0] = 0.0  # dead direction
    tbar[1, 1] = 2.0
    ds = DeflationSpace(V, tbar)
    r0 = np.ones(4)
    with pytest.warns(UserWarning):
        x, r = deflation_project(ds, np.zeros(4), r0)
    assert np.isfinite(r).all()


def test_projection_eigencomponents_example1_second_rhs():
    """After 40 cycles, converged directions drop by at least 1e3."""
    op = generate(MatrixRecipe("example1", 5000))
    B = make_rhs(5000, 2, "random", seed=101)
    cfg = SolverConfig(m=100, k=40, lin_rtol=1e-30, eig_rtol=1e-30,
                      max_cycles=40, reorth_policy=k_so())
    res = lan_dr(op, B[:, 0], None, cfg)
    _x, r = deflation_project(res.deflation, np.zeros(5000), B[:, 1])
    converged = res.ritz.resnorms <= 1e-6
    assert converged.sum() >= 10
    for i in np.flatnonzero(converged):
        j = int(np.argmin(np.abs(op.diag - res.ritz.values[i])))
        assert abs(r[j]) <= 1e-3 * abs(B[j, 1])


# ------------------------------------------------------------------------- cg


def test_cg_identity_one_iteration():
    op = DiagonalOperator(np.ones(12))
    b = np.arange(1.0, 13.0)
    x, hist = cg(op, b, rtol=1e-12)
    assert hist.cycles == 1 and np.allclose(x, b)


def test_cg_finite_termination_two_distinct_eigenvalues():
    op = DiagonalOperator(np.array([1.0, 2.0]))
    b = np.array([1.0, 1.0])
    x, hist = cg(op, b, rtol=1e-12)
    assert hist.cycles == 2
    assert np.allclose(x, b / np.array([1.0, 2.0]))


def test_cg_matches_textbook_oracle_step_for_step(rng):
    """Same numpy lane, same arithmetic order: residual histories agree."""
    op = generate(MatrixRecipe("example1", 5000))
    b = make_rhs(5000, 1, "random", seed=101)[:, 0]
    prev = get_backend()
    set_backend("numpy")
    try:
        x, hist = cg(op, b, rtol=1e-8, replace_every=0)
        mine = np.array([p.resid_rel for p in hist.points])

        d = op.diag
        xk = np.zeros(5000)
        r = b.copy()
        p = r.copy()
        rho = r @ r
        bnorm = np.linalg.norm(b)
        oracle = [np.sqrt(rho) / bnorm]
        while np.sqrt(rho) / bnorm > 1e-8:
            ap = d * p
            alpha = rho / (p @ ap)
            xk = xk + alpha * p
            r = r - alpha * ap
            rho_new = r @ r
            p = r + (rho_new / rho) * p
            rho = rho_new
            oracle.append(np.sqrt(rho) / bnorm)
        oracle = np.array(oracle)
    finally:
        set_backend(prev)
    assert mine.shape == oracle.shape
    assert np.max(np.abs(mine - oracle) / oracle) <= 1e-12


def test_cg_residual_replacement_bounds_drift(rng):
    op = generate(MatrixRecipe("example3", 1500))
    b = rng.normal(1500)
    x, hist = cg(op, b, rtol=1e-10, replace_every=100)
    r_true = b - op.diag * x
    anorm = float(op.diag.max())
    bound = 1e-12 * (anorm * np.linalg.norm(x) + np.linalg.norm(b))
    assert abs(np.linalg.norm(r_true) - np.linalg.norm(hist.residual)) <= bound


def test_cg_indefinite_raises():
    op = DiagonalOperator(np.concatenate([[-1.0], np.arange(1.0, 40.0)]))
    b = np.ones(40)
    with pytest.raises(IndefiniteOperatorError) as exc:
        cg(op, b, rtol=1e-10)
    assert "indefinite" in exc.value.history.flags


def test_cg_local_residual_orthogonality(rng):
    op = generate(MatrixRecipe("example3", 800))
    b = rng.normal(800)
    # replay CG saving residuals (oracle-style loop, same arithmetic)
    d = op.diag
    x = np.zeros(800)
    r = b.copy()
    p = r.copy()
    rho = r @ r
    res_hist = [r.copy()]
    for _ in range(60):
        ap = d * p
        alpha = rho / (p @ ap)
        x += alpha * p
        r = r - alpha * ap
        rho_new = r @ r
        p = r + (rho_new / rho) * p
        rho = rho_new
        res_hist.append(r.copy())
    for j in range(len(res_hist)):
        for i in range(max(0, j - 5), j):
            rij = abs(res_hist[j] @ res_hist[i])
            assert rij <= 1e-8 * np.linalg.norm(res_hist[j]) * np.linalg.norm(res_hist[i])


# ----------------------------------------------------------------------- d_cg


def test_d_cg_empty_space_is_plain_cg(rng):
    op = DiagonalOperator(np.arange(1.0, 301.0))
    b = rng.normal(300)
    x1, h1 = cg(op, b, rtol=1e-10)
    x2, h2 = d_cg(op, b, None, _empty_ds(300), rtol=1e-10)
    assert h2.cycles == h1.cycles
    assert np.allclose(x1, x2, rtol=1e-12)


def test_d_cg_beats_cg_and_stays_within_5_iterations(example1_ds, rng):
    op, res = example1_ds
    for seed in (5, 6, 7):
        b2 = make_rhs(op.n, 1, "random", seed=seed)[:, 0]
        x1, h1 = cg(op, b2, rtol=1e-8)
        x2, h2 = d_cg(op, b2, None, res.deflation, rtol=1e-8)
        assert h2.cycles <= h1.cycles + 5
        assert np.linalg.norm(op.diag * x2 - b2) <= 2e-8 * np.linalg.norm(b2)


def test_d_cg_no_eigencomponent_resurgence():
    """With a fully converged space, deflated components stay suppressed
    through the whole CG sweep."""
    op = generate(MatrixRecipe("example3", 5000))
    B = make_rhs(5000, 2, "random", seed=11)
    cfg = SolverConfig(m=120, k=40, lin_rtol=1e-30, eig_rtol=1e-10,
                      n_eig_wanted=40, max_cycles=40)
    res = lan_dr(op, B[:, 0], None, cfg)
    assert np.all(res.ritz.resnorms <= 1e-10)
    dirs = [int(np.argmin(np.abs(op.diag - v))) for v in res.ritz.values]
    b2 = B[:, 1]
    bnorm = np.linalg.norm(b2)
    _xf, hf = d_cg(op, b2, None, res.deflation, rtol=1e-8)
    for frac in (0.25, 0.5, 0.75, 1.0):
        cut = max(1, int(frac * hf.cycles))
        _x, h = d_cg(op, b2, None, res.deflation, rtol=1e-30, maxit=cut)
        comp = np.max(np.abs(h.residual[dirs]))
        assert comp <= 1e-6 * bnorm


def test_d_cg_table42_iteration_count(rng):
    """Example 3 deflation space: second right-hand side takes about 57."""
    op = generate(MatrixRecipe("example3", 5000))
    B = make_rhs(5000, 2, "random", seed=11)
    cfg = SolverConfig(m=120, k=40, lin_rtol=1e-30, eig_rtol=1e-30,
                      max_cycles=12)
    res = lan_dr(op, B[:, 0], None, cfg)
    _x, h = d_cg(op, B[:, 1], None, res.deflation, rtol=1e-8)
    assert abs(h.cycles - 57) <= 10


def test_d_cg_improves_with_first_solve_accuracy():
    """Under-converged eigenvectors leave slow components behind: the
    second right-hand side gets strictly cheaper as the first solve runs
    20 -> 40 -> 60 cycles, and always beats plain CG."""
    op = generate(MatrixRecipe("example1", 5000))
    B = make_rhs(5000, 2, "random", seed=101)
    counts = []
    for cycles in (20, 40, 60):
        cfg = SolverConfig(m=100, k=40, lin_rtol=1e-30, eig_rtol=1e-30,
                          max_cycles=cycles, reorth_policy=k_so())
        res = lan_dr(op, B[:, 0], None, cfg)
        _x, h = d_cg(op, B[:, 1], None, res.deflation, rtol=1e-8)
        counts.append(h.cycles)
    _x, h_cg = cg(op, B[:, 1], rtol=1e-8)
    assert counts[0] > counts[1] > counts[2]
    assert counts[0] < h_cg.cycles


def test_d_cg_sweep_more_deflation_is_faster():
    op = generate(MatrixRecipe("example1", 5000))
    B = make_rhs(5000, 2, "random", seed=101)
    counts = []
    for k in (10, 40, 80):
        cfg = SolverConfig(m=k + 60, k=k, lin_rtol=1e-30, eig_rtol=1e-30,
                          max_cycles=50, reorth_policy=k_so())
        res = lan_dr(op, B[:, 0], None, cfg)
        _x, h = d_cg(op, B[:, 1], None, res.deflation, rtol=1e-8)
        counts.append(h.cycles)
    assert counts[0] > counts[1] > counts[2]


def test_d_cg_complex_hermitian(rng):
    from conftest import random_hermitian_csr

    op = random_hermitian_csr(100, 41)
    # make it positive definite for CG: shift by a safe margin
    eye = np.eye(100, dtype=complex)
    A = np.column_stack([op.apply(eye[:, j]) for j in range(100)])
    shift = abs(float(np.linalg.eigvalsh(A).min())) + 1.0
    from landr import CsrOperator

    op = CsrOperator.from_dense(A + shift * np.eye(100))
    A = A + shift * np.eye(100)
    b1 = rng.normal_complex(100)
    b2 = rng.normal_complex(100)
    cfg = SolverConfig(m=30, k=8, lin_rtol=1e-10, max_cycles=60)
    res = lan_dr(op, b1, None, cfg)
    assert res.converged
    x2, h2 = d_cg(op, b2, None, res.deflation, rtol=1e-10)
    _x3, h3 = cg(op, b2, rtol=1e-10)
    assert h2.converged
    assert h2.cycles <= h3.cycles + 5
    assert np.linalg.norm(A @ x2 - b2) <= 1e-8 * np.linalg.norm(b2)


def test_solution_cache_projection(rng):
    op = DiagonalOperator(np.arange(1.0, 201.0))
    cache = SolutionCache(200, np.float64)
    b1 = rng.normal(200)
    x1, h1 = cg(op, b1, rtol=1e-12)
    cache.add(x1, b1 - h1.residual)
    # nearly identical rhs: projection over the previous solution leaves
    # only the perturbation
    b2 = b1 + 1e-3 * rng.normal(200)
    x0, r0 = cache.project(np.zeros(200), b2)
    assert np.linalg.norm(r0) <= 5e-3 * np.linalg.norm(b2)
    x2, h2 = d_cg(op, b2, None, _empty_ds(200), rtol=1e-8, prev=cache)
    _x3, h3 = cg(op, b2, rtol=1e-8)
    assert h2.cycles < h3.cycles

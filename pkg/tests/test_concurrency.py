"""Concurrency contracts: parallel apply, shared deflation spaces."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from landr import SolverConfig, d_cg, lan_dr
from landr.harness import MatrixRecipe, generate, make_rhs

from conftest import random_hermitian_csr


def test_operator_apply_concurrently_matches_sequential(rng):
    op = random_hermitian_csr(300, 12)
    vs = [rng.normal_complex(300) for _ in range(16)]
    expected = [op.apply(v) for v in vs]
    with ThreadPoolExecutor(max_workers=8) as pool:
        got = list(pool.map(op.apply, vs))
    for e, g in zip(expected, got):
        assert np.array_equal(e, g)


def test_shared_deflation_space_concurrent_d_cg():
    op = generate(MatrixRecipe("example3", 1500))
    B = make_rhs(1500, 5, "random", seed=33)
    cfg = SolverConfig(m=60, k=20, lin_rtol=1e-30, eig_rtol=1e-30,
                      max_cycles=10)
    res = lan_dr(op, B[:, 0], None, cfg)
    ds = res.deflation

    def solve(j):
        x, h = d_cg(op, B[:, j], None, ds, rtol=1e-9)
        return j, x, h.converged

    sequential = {j: d_cg(op, B[:, j], None, ds, rtol=1e-9)[0]
                  for j in range(1, 5)}
    with ThreadPoolExecutor(max_workers=4) as pool:
        for j, x, converged in pool.map(solve, range(1, 5)):
            assert converged
            assert np.array_equal(x, sequential[j])

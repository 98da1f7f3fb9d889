"""Time the numba kernel lane against the pure-numpy fallback.

Covers the switched hot kernels (diagonal/CSR matvec, BLAS-1) at desk scale
and one full restarted-Lanczos cycle end to end.  Run as

    python benchmarks/bench_kernels.py [--n 5000] [--repeat 200]

The lane can also be pinned for a whole process with LANDR_BACKEND=numpy.
"""

import argparse
import time

import numpy as np

from landr import _kernels
from landr.core import CsrOperator, DiagonalOperator, Rng


def _time(fn, repeat):
    fn()  # warm-up (JIT compilation lands here on the numba lane)
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def _random_csr(n, per_row, rng):
    gen = np.random.Generator(np.random.PCG64(7))
    indptr = np.arange(n + 1, dtype=np.int64) * per_row
    indices = gen.integers(0, n, size=n * per_row).astype(np.int64)
    data = gen.normal(size=n * per_row)
    return data, indices, indptr


def bench_kernels(n, repeat):
    rng = Rng(3)
    d = rng.normal(n) + 10.0
    x = rng.normal(n)
    y = rng.normal(n)
    data, indices, indptr = _random_csr(n, 5, rng)

    cases = {
        "diag_matvec": lambda lane: lane["diag_matvec"](d, x),
        "csr_matvec(5/row)": lambda lane: lane["csr_matvec"](data, indices, indptr, x),
        "dot": lambda lane: lane["dot"](x, y),
        "norm2": lambda lane: lane["norm2"](x),
        "axpy": lambda lane: lane["axpy"](0.3, x, y.copy()),
    }
    print(f"{'kernel':>18s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for name, fn in cases.items():
        t_np = _time(lambda: fn(_kernels._LANES["numpy"]), repeat)
        t_nb = _time(lambda: fn(_kernels._LANES["numba"]), repeat)
        print(f"{name:>18s} {t_np*1e6:>10.1f}us {t_nb*1e6:>10.1f}us "
              f"{t_np/t_nb:>8.2f}x")


def bench_solver_cycle(n, repeat):
    """One restarted cycle of the Galerkin driver under each lane."""
    from landr import SolverConfig, lan_dr
    from landr.harness import MatrixRecipe, generate, make_rhs

    op_diag = generate(MatrixRecipe("example3", n))
    op_csr = CsrOperator.from_diagonal(op_diag.diag)
    b = make_rhs(n, 1, "random", seed=1)[:, 0]
    cfg = SolverConfig(m=60, k=20, lin_rtol=1e-30, eig_rtol=1e-30, max_cycles=4)

    print(f"\n{'driver (4 cycles)':>18s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for label, op in (("diagonal op", op_diag), ("csr op", op_csr)):
        times = {}
        for lane in ("numpy", "numba"):
            _kernels.set_backend(lane)
            times[lane] = _time(lambda: lan_dr(op, b, None, cfg), max(1, repeat // 100))
        print(f"{label:>18s} {times['numpy']*1e3:>10.1f}ms "
              f"{times['numba']*1e3:>10.1f}ms "
              f"{times['numpy']/times['numba']:>8.2f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if "numba" not in _kernels._LANES:
        raise SystemExit("numba unavailable; nothing to compare")
    start = _kernels.get_backend()
    print(f"n = {args.n}, repeat = {args.repeat}, active lane at start: {start}")
    try:
        bench_kernels(args.n, args.repeat)
        bench_solver_cycle(args.n, args.repeat)
    finally:
        _kernels.set_backend(start)


if __name__ == "__main__":
    main()

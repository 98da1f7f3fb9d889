"""Command-line front end: solve, eig, bench, repro.

Exit codes: 0 success/convergence, 1 usage or I/O error, 2 the run finished
but did not converge.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import _kernels, harness
from .harness import BUILTIN_NAMES, ExperimentSpec, MatrixRecipe


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract is 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="landr", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default=os.environ.get("LANDR_OUT", "out"),
                   help="output directory (env LANDR_OUT; default: out)")
    p.add_argument("--threads", type=int, default=0,
                   help="operator-internal threads for the numba lane "
                        "(0: leave as is)")
    sub = p.add_subparsers(dest="command", required=True)

    def add_matrix_args(sp):
        sp.add_argument("--matrix", required=True,
                        help="recipe name (example1, example3, example5, "
                             "example7, example10) or a Matrix Market file path")
        sp.add_argument("--n", type=int, default=0, help="dimension override")
        sp.add_argument("--matrix-seed", type=int, default=0,
                        help="seed for randomized recipes (example10)")

    solve = sub.add_parser("solve", help="solve Ax=b, deflating later right-hand sides")
    add_matrix_args(solve)
    solve.add_argument("--method", choices=("landr", "minresdr"), default="landr")
    solve.add_argument("--m", type=int, default=100)
    solve.add_argument("--k", type=int, default=40)
    solve.add_argument("--policy", default="full",
                       help="full | k-so | periodic:F | k-periodic:F | pro:E "
                            "| k-pro:E | restart-only  (E: exponent on eps)")
    solve.add_argument("--rtol", type=float, default=1e-8)
    solve.add_argument("--eig-rtol", type=float, default=1e-8)
    solve.add_argument("--neig", type=int, default=0,
                       help="eigenpairs that must converge (0: linear only)")
    solve.add_argument("--max-cycles", type=int, default=200)
    solve.add_argument("--rhs", type=int, default=1, help="number of right-hand sides")
    solve.add_argument("--rhs-mode", default="random",
                       help="random | related:EPS")
    solve.add_argument("--seed", type=int, default=1234, help="right-hand side seed")

    eig = sub.add_parser("eig", help="eigenpairs only (no linear updates)")
    add_matrix_args(eig)
    eig.add_argument("--m", type=int, default=100)
    eig.add_argument("--k", type=int, default=40)
    eig.add_argument("--policy", default="full")
    eig.add_argument("--eig-rtol", type=float, default=1e-8)
    eig.add_argument("--neig", type=int, default=10)
    eig.add_argument("--max-cycles", type=int, default=200)
    eig.add_argument("--seed", type=int, default=1234)

    bench = sub.add_parser("bench", help="run an ExperimentSpec JSON file")
    bench.add_argument("spec", help="path to the spec JSON")

    repro = sub.add_parser("repro", help="run a named built-in experiment")
    repro.add_argument("name", choices=BUILTIN_NAMES)
    return p


def _solve_spec(args) -> ExperimentSpec:
    recipe = _matrix_recipe(args)
    mode, _, eps = args.rhs_mode.partition(":")
    step = {
        "solver": "lan_dr" if args.method == "landr" else "minres_dr",
        "m": args.m,
        "k": args.k,
        "policy": args.policy,
        "lin_rtol": args.rtol,
        "eig_rtol": args.eig_rtol,
        "n_eig": args.neig,
        "max_cycles": args.max_cycles,
    }
    chain = [step]
    if args.rhs > 1:
        follow = "d_cg" if args.method == "landr" else "d_minres"
        chain.append({"solver": follow, "rtol": args.rtol,
                      "use_prior": mode == "related"})
    return ExperimentSpec(
        name="solve",
        recipe=recipe,
        chain=chain,
        rhs_count=args.rhs,
        rhs_mode=mode or "random",
        rhs_seed=args.seed,
        related_eps=float(eps) if eps else 1e-3,
    )


def _matrix_recipe(args) -> MatrixRecipe:
    if args.matrix in harness.RECIPES and args.matrix != "file":
        return MatrixRecipe(args.matrix, n=args.n, seed=args.matrix_seed)
    path = Path(args.matrix)
    if not path.exists():
        raise UsageError(
            f"--matrix {args.matrix!r} is neither a recipe name nor a file"
        )
    return MatrixRecipe("file", params={"path": str(path)})


def _run_and_report(specs, outdir) -> int:
    rc = 0
    for spec in specs:
        bundle = harness.run(spec)
        paths = harness.emit(bundle, outdir, formats=("csv", "json"),
                             gnuplot=True)
        for rec in bundle.summary["solves"]:
            resid = rec["final_resid_rel"]
            resid_txt = "-" if resid is None else f"{resid:.3e}"
            print(f"{spec.name}: {rec['solver']} rhs{rec['rhs_index']} "
                  f"matvecs={rec['matvecs']} resid={resid_txt} "
                  f"converged={rec['converged']}")
            if not rec["converged"] and "instability" not in rec["flags"]:
                rc = 2
        print(f"{spec.name}: wrote {', '.join(str(p) for p in paths)}")
    return rc


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.threads and _kernels.get_backend() == "numba":
        import numba

        numba.set_num_threads(args.threads)
    try:
        if args.command == "solve":
            spec = _solve_spec(args)
            return _run_and_report([spec], args.out)
        if args.command == "eig":
            recipe = _matrix_recipe(args)
            spec = ExperimentSpec(
                name="eig",
                recipe=recipe,
                chain=[{
                    "solver": "lan_dr", "m": args.m, "k": args.k,
                    "policy": args.policy, "eig_rtol": args.eig_rtol,
                    "n_eig": args.neig, "max_cycles": args.max_cycles,
                    "eig_only": True,
                }],
                rhs_seed=args.seed,
            )
            return _run_and_report([spec], args.out)
        if args.command == "bench":
            try:
                text = Path(args.spec).read_text()
            except OSError as exc:
                print(f"error: cannot read {args.spec}: {exc}", file=sys.stderr)
                return 1
            spec = ExperimentSpec.from_json(text)
            return _run_and_report([spec], args.out)
        if args.command == "repro":
            specs = harness.builtin_experiments(args.name)
            _run_and_report(specs, Path(args.out) / args.name)
            return 0
    except (UsageError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())

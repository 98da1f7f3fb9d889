"""Test-matrix generators, experiment orchestration, and result output.

Every desk-scale experiment in the repo is described by an
:class:`ExperimentSpec` (matrix recipe + right-hand sides + a chain of
solver steps) that serializes to JSON and replays deterministically:
``run`` resets the global counters, so identical specs reproduce identical
matvec/vector-op totals.  Results emit as CSV curves plus one JSON summary,
optionally with a gnuplot script for residual-vs-matvec plots.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import reorth as reorth_mod
from .blockcg import BlockInstabilityError, block_cg
from .core import (
    CountingScope,
    CsrOperator,
    DiagonalOperator,
    LinearOperator,
    Rng,
    counters,
)
from .dcg import IndefiniteOperatorError, SolutionCache, cg, d_cg
from .landr import ConvergenceHistory, SolverConfig, lan_dr
from .minresdr import d_minres, minres, minres_dr
from .mmio import load_operator

RECIPES = ("example1", "example3", "example5", "example7", "example10", "file")


@dataclass
class MatrixRecipe:
    """Pure description of a test operator: (name, n, seed, params)."""

    name: str
    n: int = 0
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in RECIPES:
            raise ValueError(f"unknown recipe {self.name!r}; choose from {RECIPES}")


def _stepped_diagonal(n: int, head: np.ndarray, tail_start: float) -> np.ndarray:
    if n <= head.shape[0]:
        raise ValueError(f"recipe needs n > {head.shape[0]}, got {n}")
    tail = tail_start + np.arange(n - head.shape[0], dtype=float)
    return np.concatenate([head, tail])


def recipe_diagonal(recipe: MatrixRecipe) -> np.ndarray:
    """The exact diagonal a recipe describes (generation is pure)."""
    name = recipe.name
    if name == "example1":
        n = recipe.n or 5000
        head = np.round(np.arange(1, 101) * 0.1, 10)  # 0.1, 0.2, ..., 10.0
        return _stepped_diagonal(n, head, 11.0)
    if name in ("example3", "example5", "example7"):
        n = recipe.n or (10000 if name == "example7" else 5000)
        head = np.arange(1.0, 11.0)  # 1, 2, ..., 10
        d = _stepped_diagonal(n, head, 100.0)
        if name == "example5":
            d[-1] = float(recipe.params.get("largest", 5400.0))
        return d
    if name == "example10":
        n = recipe.n or 1000
        shift = float(recipe.params.get("shift", 2.0))
        return Rng(recipe.seed).normal(n) + shift
    raise ValueError(f"recipe {name!r} has no diagonal")


def generate(recipe: MatrixRecipe) -> LinearOperator:
    """Build the operator a recipe describes."""
    if recipe.name == "file":
        path = recipe.params.get("path")
        if not path:
            raise ValueError("file recipe needs params['path']")
        return load_operator(path)
    d = recipe_diagonal(recipe)
    if recipe.params.get("storage") == "csr":
        return CsrOperator.from_diagonal(d)
    return DiagonalOperator(d)


def make_rhs(n: int, count: int, mode: str = "random", seed: int = 1234,
             related_eps: float = 1e-3, dtype=np.float64) -> np.ndarray:
    """Right-hand side block: independent normals, or one normal plus
    related perturbations b_i = b_1 + eps * normal."""
    rng = Rng(seed)
    complex_kind = np.dtype(dtype).kind == "c"

    def draw():
        return rng.normal_complex(n) if complex_kind else rng.normal(n)

    B = np.empty((n, count), dtype=dtype)
    if mode == "random":
        for j in range(count):
            B[:, j] = draw()
    elif mode == "related":
        base = draw()
        B[:, 0] = base
        for j in range(1, count):
            B[:, j] = base + related_eps * draw()
    else:
        raise ValueError(f"unknown rhs mode {mode!r}")
    return B


# ---------------------------------------------------------------- experiment


@dataclass
class ExperimentSpec:
    name: str
    recipe: MatrixRecipe
    chain: list
    rhs_count: int = 1
    rhs_mode: str = "random"
    rhs_seed: int = 1234
    related_eps: float = 1e-3

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        raw = json.loads(text)
        raw["recipe"] = MatrixRecipe(**raw["recipe"])
        return cls(**raw)


@dataclass
class SolveRecord:
    step: int
    label: str
    rhs_index: int
    history: ConvergenceHistory
    extra: dict = field(default_factory=dict)


@dataclass
class ResultBundle:
    spec: ExperimentSpec
    solves: list
    summary: dict


def _cfg_from_step(step: dict) -> SolverConfig:
    policy = reorth_mod.parse_policy(step.get("policy", "full"))
    return SolverConfig(
        m=int(step["m"]),
        k=int(step["k"]),
        max_cycles=int(step.get("max_cycles", 200)),
        lin_rtol=float(step.get("lin_rtol", 1e-8)),
        eig_rtol=float(step.get("eig_rtol", 1e-8)),
        n_eig_wanted=int(step.get("n_eig", 0)),
        target=step.get("target", "smallest-magnitude"),
        reorth_policy=policy,
        retain_largest=int(step.get("retain_largest", 0)),
        eig_only=bool(step.get("eig_only", False)),
        monitor_orthodefect=bool(step.get("monitor_orthodefect", False)),
        seed=int(step.get("seed", 0)),
    )


def _rhs_list(step: dict, count: int, default) -> list:
    sel = step.get("rhs", default)
    if sel == "all":
        return list(range(count))
    if sel == "rest":
        return list(range(1, count))
    if isinstance(sel, int):
        return [sel]
    return [int(j) for j in sel]


def run(spec: ExperimentSpec) -> ResultBundle:
    """Execute a chain: producers build the deflation space for rhs 0;
    deflated consumers sweep the remaining right-hand sides; baselines run
    standalone.  Solver failures are recorded as flags, not raised."""
    counters.reset()
    op = generate(spec.recipe)
    B = make_rhs(op.n, spec.rhs_count, spec.rhs_mode, spec.rhs_seed,
                 spec.related_eps, op.dtype)
    ds = None
    prior = SolutionCache(op.n, op.dtype)
    solves: list[SolveRecord] = []
    step_counts: list[dict] = []

    for step_no, step in enumerate(spec.chain):
        kind = step["solver"]
        scope = CountingScope()
        scope.__enter__()
        if kind in ("lan_dr", "minres_dr"):
            cfg = _cfg_from_step(step)
            rhs = int(step.get("rhs", 0))
            b = B[:, rhs]
            if kind == "lan_dr":
                res = lan_dr(op, b, None, cfg)
                extra = {"ritz_resnorms": res.ritz.resnorms.tolist(),
                         "ritz_values": res.ritz.values.tolist()}
            else:
                res = minres_dr(op, b, None, cfg)
                extra = {"harmonic_resnorms": res.harmonic.resnorms.tolist(),
                         "harmonic_values": res.harmonic.values.tolist()}
            ds = res.deflation
            if not cfg.eig_only and res.history.residual is not None:
                prior.add(res.x, b - res.history.residual)
            solves.append(SolveRecord(step_no, res.history.solver, rhs,
                                      res.history, extra))
        elif kind in ("d_cg", "d_minres"):
            if ds is None:
                raise ValueError(f"step {step_no}: no deflation space produced yet")
            use_prior = bool(step.get("use_prior", False))
            for rhs in _rhs_list(step, spec.rhs_count, "rest"):
                b = B[:, rhs]
                fn = d_cg if kind == "d_cg" else d_minres
                try:
                    x, hist = fn(op, b, None, ds,
                                 rtol=float(step.get("rtol", 1e-8)),
                                 maxit=step.get("maxit"),
                                 prev=prior if use_prior else None,
                                 rhs_index=rhs)
                except IndefiniteOperatorError as exc:
                    solves.append(SolveRecord(step_no, kind.replace("_", "-"),
                                              rhs, exc.history))
                    continue
                if use_prior and hist.residual is not None:
                    prior.add(x, b - hist.residual)
                solves.append(SolveRecord(step_no, hist.solver, rhs, hist))
        elif kind in ("cg", "minres"):
            fn = cg if kind == "cg" else minres
            for rhs in _rhs_list(step, spec.rhs_count, 0):
                b = B[:, rhs]
                try:
                    _x, hist = fn(op, b, rtol=float(step.get("rtol", 1e-8)),
                                  maxit=step.get("maxit"), rhs_index=rhs)
                except IndefiniteOperatorError as exc:
                    solves.append(SolveRecord(step_no, "cg", rhs, exc.history))
                    continue
                solves.append(SolveRecord(step_no, hist.solver, rhs, hist))
        elif kind == "block_cg":
            try:
                _X, hists = block_cg(op, B, rtol=float(step.get("rtol", 1e-8)),
                                     maxit=step.get("maxit"))
            except BlockInstabilityError as exc:
                hists = exc.histories
            for hist in hists:
                solves.append(SolveRecord(step_no, hist.solver,
                                          hist.rhs_index, hist))
        else:
            raise ValueError(f"unknown chain solver {kind!r}")
        scope.__exit__(None, None, None)
        step_counts.append({
            "solver": kind,
            "matvecs": scope.counts.matvecs,
            "vecops": scope.counts.vecops,
        })

    return ResultBundle(spec, solves, _summarize(spec, solves, step_counts))


def _summarize(spec: ExperimentSpec, solves: list, step_counts: list) -> dict:
    # per-step counts come from counter scopes around each chain step, so
    # shared work (one block solve feeding every rhs history) counts once
    per_step: dict[int, dict] = {}
    for i, sc in enumerate(step_counts):
        per_step[i] = {"label": sc["solver"], "matvecs": sc["matvecs"],
                       "vecops": sc["vecops"], "solves": 0}
    for s in solves:
        agg = per_step.setdefault(
            s.step, {"label": s.label, "matvecs": 0, "vecops": 0, "solves": 0}
        )
        agg["solves"] += 1
    records = []
    for s in solves:
        h = s.history
        rec = {
            "step": s.step,
            "solver": s.label,
            "rhs_index": s.rhs_index,
            "matvecs": h.matvecs,
            "vecops": h.vecops,
            "iterations": h.cycles,
            "final_resid_rel": h.final_resid_rel,
            "orthodefect_final": h.orthodefect_final,
            "converged": h.converged,
            "flags": list(h.flags),
        }
        if h.directives:
            rec["reorth"] = {
                "vectors": len(h.directives),
                "mandatory": sum(1 for d in h.directives if d.mandatory),
                "triggered": sum(1 for d in h.directives if not d.mandatory),
            }
        rec.update(s.extra)
        records.append(rec)
    return {
        "name": spec.name,
        "recipe": dataclasses.asdict(spec.recipe),
        "rhs": {"count": spec.rhs_count, "mode": spec.rhs_mode,
                "seed": spec.rhs_seed},
        "steps": [dict(per_step[i], step=i) for i in sorted(per_step)],
        "solves": records,
        "totals": {
            "matvecs": sum(sc["matvecs"] for sc in step_counts),
            "vecops": sum(sc["vecops"] for sc in step_counts),
        },
    }


# -------------------------------------------------------------------- output

CSV_FIELDS = ("solver", "rhs_index", "cycle", "iteration", "matvecs",
              "vecops", "resid_rel", "orthodefect")


def _json_default(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def emit(bundle: ResultBundle, outdir, formats=("csv", "json"),
         gnuplot: bool = False) -> list:
    """Write the bundle to files; returns the paths written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    name = bundle.spec.name
    written = []
    if "csv" in formats:
        path = outdir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(f"# landr results for {name}, written "
                     f"{time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
            writer = csv.writer(fh)
            writer.writerow(CSV_FIELDS)
            for s in bundle.solves:
                for p in s.history.points:
                    writer.writerow([
                        s.label, s.rhs_index, p.cycle, p.iteration,
                        p.matvecs, p.vecops,
                        "" if p.resid_rel is None else f"{p.resid_rel:.12e}",
                        "" if p.orthodefect is None else f"{p.orthodefect:.6e}",
                    ])
        written.append(path)
    if "csv" in formats:
        eig_rows = [
            (s.label, s.rhs_index, cyc, i, rn)
            for s in bundle.solves
            for cyc, rns in enumerate(s.history.eig_resnorms, start=1)
            for i, rn in enumerate(rns)
        ]
        if eig_rows:
            path = outdir / f"{name}_eigresid.csv"
            with open(path, "w", newline="") as fh:
                fh.write(f"# per-cycle eigenresidual table for {name}\n")
                writer = csv.writer(fh)
                writer.writerow(("solver", "rhs_index", "cycle", "pair_index",
                                 "resnorm"))
                for row in eig_rows:
                    writer.writerow(row[:4] + (f"{row[4]:.12e}",))
            written.append(path)
    if "json" in formats:
        path = outdir / f"{name}.json"
        with open(path, "w") as fh:
            json.dump(bundle.summary, fh, indent=2, sort_keys=True,
                      default=_json_default)
            fh.write("\n")
        written.append(path)
    if gnuplot:
        path = outdir / f"{name}.gp"
        with open(path, "w") as fh:
            fh.write(_gnuplot_script(bundle))
        written.append(path)
    return written


def _gnuplot_script(bundle: ResultBundle) -> str:
    name = bundle.spec.name
    lines = [
        f'set title "{name}"',
        "set datafile separator comma",
        "set logscale y",
        'set xlabel "matrix-vector products"',
        'set ylabel "relative residual"',
        "plot \\",
    ]
    curves = []
    for s in bundle.solves:
        curves.append(
            f'  "{name}.csv" using 5:(strcol(1) eq "{s.label}" '
            f'&& $2 == {s.rhs_index} ? $7 : 1/0) '
            f'with lines title "{s.label} rhs{s.rhs_index}"'
        )
    return "\n".join(lines) + "\n" + ", \\\n".join(curves) + "\n"


# ----------------------------------------------------------- built-in repros


def builtin_experiments(name: str) -> list[ExperimentSpec]:
    """Named experiment sets reproducing the desk-scale studies."""
    if name not in BUILTIN_NAMES:
        raise ValueError(f"unknown experiment {name!r}; choose from {BUILTIN_NAMES}")
    return _BUILTINS[name]()


def _ex1_recipe():
    return MatrixRecipe("example1", 5000)


def _ex3_recipe():
    return MatrixRecipe("example3", 5000)


def _spec_example1():
    # eigenvalue study plus the linear-solve comparison against CG
    return [
        ExperimentSpec(
            name="example1_eig",
            recipe=_ex1_recipe(),
            chain=[{"solver": "lan_dr", "m": 100, "k": 40, "policy": "k-so",
                    "n_eig": 30, "eig_rtol": 1e-8, "lin_rtol": 1e-8,
                    "max_cycles": 120}],
            rhs_seed=101,
        ),
        ExperimentSpec(
            name="example1_linear",
            recipe=_ex1_recipe(),
            chain=[
                {"solver": "lan_dr", "m": 100, "k": 40, "policy": "k-so",
                 "lin_rtol": 1e-8, "max_cycles": 200},
                {"solver": "lan_dr", "m": 100, "k": 10, "policy": "k-so",
                 "lin_rtol": 1e-8, "max_cycles": 200},
                {"solver": "lan_dr", "m": 30, "k": 10, "policy": "k-so",
                 "lin_rtol": 1e-8, "max_cycles": 2000},
                {"solver": "cg", "rtol": 1e-8, "rhs": 0},
            ],
            rhs_seed=101,
        ),
    ]


def _spec_table41():
    rows = []
    for label, policy in (("restart_only", "restart-only"), ("full", "full")):
        rows.append(ExperimentSpec(
            name=f"table41_{label}",
            recipe=_ex1_recipe(),
            chain=[{"solver": "lan_dr", "m": 100, "k": 40, "policy": policy,
                    "max_cycles": 57, "lin_rtol": 1e-30, "eig_rtol": 1e-30,
                    "n_eig": 30}],
            rhs_seed=101,
        ))
    return rows


_TABLE42_ROWS = (
    ("full", "full"),
    ("k_so", "k-so"),
    ("k_periodic_40", "k-periodic:40"),
    ("k_periodic_60", "k-periodic:60"),
    ("k_periodic_70", "k-periodic:70"),
    ("k_periodic_75", "k-periodic:75"),
    ("periodic_40", "periodic:40"),
    ("periodic_70", "periodic:70"),
    ("periodic_75", "periodic:75"),
    ("periodic_80", "periodic:80"),
    ("k_pro_50", "k-pro:0.5"),
    ("k_pro_75", "k-pro:0.75"),
    ("pro_50", "pro:0.5"),
    ("pro_75", "pro:0.75"),
)


def _spec_table42():
    rows = []
    for label, policy in _TABLE42_ROWS:
        rows.append(ExperimentSpec(
            name=f"table42_{label}",
            recipe=_ex3_recipe(),
            rhs_count=2,
            rhs_seed=7,
            chain=[
                {"solver": "lan_dr", "m": 120, "k": 40, "policy": policy,
                 "max_cycles": 12, "lin_rtol": 1e-30, "eig_rtol": 1e-30,
                 "n_eig": 30},
                {"solver": "d_cg", "rtol": 1e-8, "maxit": 3000},
            ],
        ))
    return rows


def _spec_table43():
    rows = []
    for m in (100, 120, 140, 160, 180, 200):
        cycles = 1 + int(np.ceil((1000 - m) / (m - 40)))
        for label, policy in (("k_so", "k-so"), ("full", "full")):
            rows.append(ExperimentSpec(
                name=f"table43_m{m}_{label}",
                recipe=_ex3_recipe(),
                rhs_seed=7,
                chain=[{"solver": "lan_dr", "m": m, "k": 40, "policy": policy,
                        "max_cycles": cycles, "lin_rtol": 1e-30,
                        "eig_rtol": 1e-30, "n_eig": 30}],
            ))
    return rows


def _spec_example5():
    recipe = MatrixRecipe("example5", 5000)
    base = {"solver": "lan_dr", "m": 120, "k": 40, "max_cycles": 12,
            "lin_rtol": 1e-30, "eig_rtol": 1e-30, "n_eig": 30,
            "monitor_orthodefect": True}
    return [
        ExperimentSpec(name="example5_k_so", recipe=recipe, rhs_seed=7,
                       chain=[dict(base, policy="k-so")]),
        ExperimentSpec(name="example5_retain_largest", recipe=recipe,
                       rhs_seed=7,
                       chain=[dict(base, policy="k-so", retain_largest=1)]),
        ExperimentSpec(name="example5_full", recipe=recipe, rhs_seed=7,
                       chain=[dict(base, policy="full")]),
    ]


def _spec_example7():
    recipe = MatrixRecipe("example7", 10000)
    return [
        ExperimentSpec(
            name="example7_pipeline",
            recipe=recipe,
            rhs_count=20,
            rhs_seed=707,
            chain=[
                {"solver": "lan_dr", "m": 100, "k": 15,
                 "policy": "k-periodic:40", "max_cycles": 4,
                 "lin_rtol": 1e-8, "eig_rtol": 1e-30},
                {"solver": "d_cg", "rtol": 1e-8, "maxit": 4000},
            ],
        ),
        ExperimentSpec(
            name="example7_block",
            recipe=recipe,
            rhs_count=20,
            rhs_seed=707,
            chain=[{"solver": "block_cg", "rtol": 1e-8, "maxit": 4000}],
        ),
    ]


def _spec_example8():
    recipe = MatrixRecipe("example7", 10000)  # same matrix, related rhs
    return [
        ExperimentSpec(
            name="example8_pipeline",
            recipe=recipe,
            rhs_count=20,
            rhs_mode="related",
            related_eps=1e-3,
            rhs_seed=808,
            chain=[
                {"solver": "lan_dr", "m": 100, "k": 15,
                 "policy": "k-periodic:40", "max_cycles": 4,
                 "lin_rtol": 1e-6, "eig_rtol": 1e-30},
                {"solver": "d_cg", "rtol": 1e-6, "maxit": 4000,
                 "use_prior": True},
            ],
        ),
        ExperimentSpec(
            name="example8_block",
            recipe=recipe,
            rhs_count=20,
            rhs_mode="related",
            related_eps=1e-3,
            rhs_seed=808,
            chain=[{"solver": "block_cg", "rtol": 1e-6, "maxit": 4000}],
        ),
    ]


def _spec_example10():
    recipe = MatrixRecipe("example10", 1000, seed=10)
    return [
        ExperimentSpec(
            name="example10_minres_dr",
            recipe=recipe,
            rhs_count=3,
            rhs_seed=1010,
            chain=[
                {"solver": "minres_dr", "m": 50, "k": 15, "lin_rtol": 1e-8,
                 "max_cycles": 60},
                {"solver": "d_minres", "rtol": 1e-8, "maxit": 3000},
                {"solver": "minres", "rtol": 1e-8, "rhs": "rest",
                 "maxit": 3000},
            ],
        ),
        ExperimentSpec(
            name="example10_lan_dr",
            recipe=recipe,
            rhs_count=3,
            rhs_seed=1010,
            chain=[
                {"solver": "lan_dr", "m": 50, "k": 15, "lin_rtol": 1e-8,
                 "max_cycles": 60},
                {"solver": "d_minres", "rtol": 1e-8, "maxit": 3000},
                {"solver": "cg", "rtol": 1e-8, "rhs": 0, "maxit": 3000},
            ],
        ),
    ]


def _spec_fig54():
    return [
        ExperimentSpec(
            name="fig54_pipeline",
            recipe=_ex1_recipe(),
            rhs_count=10,
            rhs_seed=540,
            chain=[
                {"solver": "lan_dr", "m": 180, "k": 120, "policy": "k-so",
                 "max_cycles": 44, "lin_rtol": 1e-30, "eig_rtol": 1e-30},
                {"solver": "d_cg", "rtol": 1e-8, "maxit": 3000},
                {"solver": "cg", "rtol": 1e-8, "rhs": 0},
            ],
        ),
    ]


_BUILTINS = {
    "example1": _spec_example1,
    "table41": _spec_table41,
    "table42": _spec_table42,
    "table43": _spec_table43,
    "example5": _spec_example5,
    "example7": _spec_example7,
    "example8": _spec_example8,
    "example10": _spec_example10,
    "fig54": _spec_fig54,
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))

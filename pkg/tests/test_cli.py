"""CLI: exit codes, validation, end-to-end repro and solve runs."""

import json

import pytest

from landr.cli import main


def test_invalid_k_ge_m_exits_1(tmp_path, capsys):
    rc = main(["--out", str(tmp_path), "solve", "--matrix", "example3",
               "--n", "500", "--k", "200", "--m", "100"])
    assert rc == 1
    assert "k < m" in capsys.readouterr().err


def test_unknown_matrix_exits_1(tmp_path, capsys):
    rc = main(["--out", str(tmp_path), "solve", "--matrix", "no-such-thing"])
    assert rc == 1
    err = capsys.readouterr().err
    assert "neither a recipe name nor a file" in err


def test_usage_error_exits_1(tmp_path, capsys):
    rc = main(["--out", str(tmp_path), "bogus-command"])
    assert rc == 1


def test_solve_two_rhs_writes_outputs(tmp_path, capsys):
    rc = main(["--out", str(tmp_path), "solve", "--matrix", "example3",
               "--n", "800", "--m", "40", "--k", "10", "--rhs", "2",
               "--policy", "k-periodic:20"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "lan-dr(40,10)" in out and "d-cg" in out
    assert (tmp_path / "solve.csv").exists()
    assert (tmp_path / "solve.json").exists()


def test_solve_related_rhs_mode(tmp_path):
    rc = main(["--out", str(tmp_path), "solve", "--matrix", "example3",
               "--n", "800", "--m", "40", "--k", "10", "--rhs", "3",
               "--rhs-mode", "related:1e-3"])
    assert rc == 0
    summary = json.loads((tmp_path / "solve.json").read_text())
    d_cg_iters = [r["iterations"] for r in summary["solves"]
                  if r["solver"] == "d-cg"]
    # related mode projects over previous solutions: later rhs are cheap
    assert len(d_cg_iters) == 2 and max(d_cg_iters) <= 30


def test_solve_matrix_market_file(tmp_path):
    import numpy as np

    n = 12
    d = np.arange(1.0, n + 1)
    lines = [f"%%MatrixMarket matrix coordinate real symmetric\n{n} {n} {n}"]
    lines += [f"{i+1} {i+1} {d[i]}" for i in range(n)]
    path = tmp_path / "diag.mtx"
    path.write_text("\n".join(lines) + "\n")
    rc = main(["--out", str(tmp_path), "solve", "--matrix", str(path),
               "--m", "8", "--k", "2"])
    assert rc == 0
    summary = json.loads((tmp_path / "solve.json").read_text())
    assert summary["solves"][0]["converged"]


def test_solve_nonconvergence_exits_2(tmp_path):
    rc = main(["--out", str(tmp_path), "solve", "--matrix", "example3",
               "--n", "800", "--m", "40", "--k", "10", "--max-cycles", "1",
               "--rtol", "1e-12"])
    assert rc == 2


def test_eig_subcommand(tmp_path, capsys):
    rc = main(["--out", str(tmp_path), "eig", "--matrix", "example3",
               "--n", "800", "--m", "40", "--k", "10", "--neig", "5"])
    assert rc == 0
    summary = json.loads((tmp_path / "eig.json").read_text())
    vals = summary["solves"][0]["ritz_values"][:5]
    assert vals == pytest.approx([1.0, 2.0, 3.0, 4.0, 5.0], abs=1e-7)


def test_bench_runs_spec_file(tmp_path):
    from landr import ExperimentSpec, MatrixRecipe

    spec = ExperimentSpec(
        name="benchspec",
        recipe=MatrixRecipe("example3", 500),
        rhs_count=2,
        chain=[
            {"solver": "lan_dr", "m": 30, "k": 10, "max_cycles": 12},
            {"solver": "d_cg", "rtol": 1e-8},
        ],
    )
    path = tmp_path / "spec.json"
    path.write_text(spec.to_json())
    rc = main(["--out", str(tmp_path), "bench", str(path)])
    assert rc == 0
    assert (tmp_path / "benchspec.csv").exists()


def test_bench_missing_file_exits_1(tmp_path, capsys):
    rc = main(["--out", str(tmp_path), "bench", str(tmp_path / "missing.json")])
    assert rc == 1


def test_repro_example10_end_to_end(tmp_path, capsys):
    rc = main(["--out", str(tmp_path), "repro", "example10"])
    assert rc == 0
    outdir = tmp_path / "example10"
    for name in ("example10_minres_dr", "example10_lan_dr"):
        assert (outdir / f"{name}.csv").exists()
        assert (outdir / f"{name}.json").exists()
    summary = json.loads((outdir / "example10_minres_dr.json").read_text())
    labels = [s["solver"] for s in summary["solves"]]
    assert labels[0].startswith("minres-dr") and "d-minres" in labels


def test_solve_example3_full_size_second_rhs_count(tmp_path, capsys):
    """The documented invocation: Lan-DR(120,40) with k-periodic(40) on
    example3, then D-CG on the second right-hand side in about 57 steps."""
    rc = main(["--out", str(tmp_path), "solve", "--matrix", "example3",
               "--m", "120", "--k", "40", "--policy", "k-periodic:40",
               "--rhs", "2", "--seed", "7"])
    assert rc == 0
    summary = json.loads((tmp_path / "solve.json").read_text())
    d_cg_rec = [r for r in summary["solves"] if r["solver"] == "d-cg"][0]
    assert abs(d_cg_rec["iterations"] - 57) <= 10


def test_repro_rejects_unknown_name(tmp_path, capsys):
    # subparsers inherit the raising parser class, so this maps to exit 1
    rc = main(["--out", str(tmp_path), "repro", "unknown-experiment"])
    assert rc == 1
    assert "invalid choice" in capsys.readouterr().err

import csv
import json

import jsonschema
import numpy as np
import pytest

from stiefel_sketch.cli import (
    EXIT_INPUT,
    EXIT_MAX_ITERS,
    EXIT_OK,
    SUMMARY_SCHEMA,
    main,
)
from stiefel_sketch.optim import ConvergenceTrace

CCA_SYNTH = "n=800,dx=10,dy=8,sigmas=0.9/0.6/0.4/0.2,cond=5,seed=1"
FDA_SYNTH = "n=600,d=8,classes=4,sep=3,seed=2"


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    summary = None
    if (out / "summary.json").exists():
        summary = json.loads((out / "summary.json").read_text())
        jsonschema.validate(summary, SUMMARY_SCHEMA)
    return code, out, summary


def test_cca_solve(tmp_path):
    code, out, s = run(tmp_path, "--task", "cca", "--synth", CCA_SYNTH, "--seeds", "0,1", "--sketch-size", "40")
    assert code == EXIT_OK
    assert s["dims"] == {"n": 800, "dx": 10, "dy": 8, "p": 3}
    assert len(s["runs"]) == 2
    for r in s["runs"]:
        assert r["status"] == "gradient_converged"
        np.testing.assert_allclose(r["values"], s["reference"]["values"], rtol=1e-6)
        assert r["suboptimality"] < 1e-6
        tr = ConvergenceTrace.from_csv((out / r["trace_file"]).read_text())
        assert tr.n_iters == r["iterations"]


def test_fda_solve_tr(tmp_path):
    code, _, s = run(tmp_path, "--task", "fda", "--synth", FDA_SYNTH, "--p", "2", "--solver", "tr", "--lambda", "0.1")
    assert code == EXIT_OK
    np.testing.assert_allclose(s["runs"][0]["values"], s["reference"]["values"], rtol=1e-6)


def test_fda_from_libsvm(tmp_path):
    code, out, _ = run(tmp_path, "--task", "synth", "--problem", "fda", "--synth", FDA_SYNTH, name="data")
    assert code == EXIT_OK
    code, _, s = run(tmp_path, "--task", "fda", "--data", str(out / "data.svm"), "--p", "2", "--precond", "exact")
    assert code == EXIT_OK
    assert s["dims"]["classes"] == 4


def test_cca_from_two_csv_views(tmp_path):
    code, out, s = run(tmp_path, "--task", "synth", "--synth", CCA_SYNTH, name="data")
    assert code == EXIT_OK and s["files"] == ["view1.csv", "view2.csv"]
    code, _, s = run(
        tmp_path, "--task", "cca", "--data", str(out / "view1.csv"), "--data2", str(out / "view2.csv"),
        "--precond", "exact",
    )
    assert code == EXIT_OK
    np.testing.assert_allclose(s["reference"]["values"], [0.9, 0.6, 0.4], atol=0.08)


def test_max_iters_exit_code(tmp_path):
    code, _, s = run(tmp_path, "--task", "cca", "--synth", CCA_SYNTH, "--precond", "none", "--max-iters", "3")
    assert code == EXIT_MAX_ITERS
    assert s["exit_code"] == EXIT_MAX_ITERS
    assert s["runs"][0]["status"] == "max_iters"


@pytest.mark.parametrize(
    "args",
    [
        ["--task", "cca"],
        ["--task", "cca", "--synth", CCA_SYNTH, "--mu", "1,2"],
        ["--task", "cca", "--synth", CCA_SYNTH, "--lambda", "-1"],
        ["--task", "cca", "--synth", CCA_SYNTH, "--precond", "dominant"],
        ["--task", "cca", "--synth", CCA_SYNTH, "--delta", "2"],
        ["--task", "cca", "--synth", "n=10,bogus=1"],
        ["--task", "cca", "--synth", CCA_SYNTH, "--p", "9"],
        ["--task", "fda", "--data", "/nonexistent/file.svm"],
        ["--task", "synth"],
    ],
)
def test_invalid_config(tmp_path, args, capsys):
    code, _, _ = run(tmp_path, *args)
    assert code == EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_unparseable_data(tmp_path):
    bad = tmp_path / "bad.svm"
    bad.write_text("1 1:1\n2 oops\n")
    code, _, _ = run(tmp_path, "--task", "fda", "--data", str(bad))
    assert code == EXIT_INPUT


def test_deterministic_runs_are_byte_identical(tmp_path):
    args = ["--task", "sweep", "--synth", CCA_SYNTH, "--sketch-sizes", "20,40", "--deterministic", "--threads", "2"]
    run(tmp_path, *args, name="a")
    run(tmp_path, *args, name="b")
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_sweep_outputs_and_trend(tmp_path):
    code, out, s = run(
        tmp_path, "--task", "sweep", "--synth", "n=3000,dx=20,dy=16,sigmas=0.9/0.7/0.5/0.3,cond=30,seed=0",
        "--seeds", "0,1", "--no-warm-start", "--sketch-sizes", "40,200",
    )
    assert code == EXIT_OK
    med = {r["setting"]: r["median_iterations"] for r in s["settings"]}
    assert set(med) == {"none", "exact", "sketch_s40", "sketch_s200"}
    assert med["exact"] < med["none"]
    assert med["sketch_s200"] <= med["sketch_s40"]
    with open(out / "sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert all((out / r["trace_file"]).exists() for r in s["runs"])


def test_diag_matches_closed_form(tmp_path):
    code, _, s = run(tmp_path, "--task", "diag", "--synth", CCA_SYNTH, "--precond", "exact")
    assert code == EXIT_OK
    d = s["diagnostics"]
    np.testing.assert_allclose(d["hessian"]["eigenvalues"], d["closed_form"], atol=1e-8)
    assert d["hessian"]["condition_number"] == pytest.approx(d["kappa_star"], rel=1e-7)
    np.testing.assert_allclose(d["pencil_kappa"], 1.0, rtol=1e-8)
    code, _, s = run(tmp_path, "--task", "diag", "--problem", "fda", "--synth", FDA_SYNTH, "--p", "2",
                     "--precond", "exact", "--lambda", "0.1", name="fda")
    assert code == EXIT_OK
    d = s["diagnostics"]
    np.testing.assert_allclose(d["hessian"]["eigenvalues"], d["closed_form"], atol=1e-8 * max(d["closed_form"]))


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert "0.1.0" in capsys.readouterr().out

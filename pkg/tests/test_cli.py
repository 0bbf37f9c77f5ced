import json

import numpy as np
import pytest

from hbtucker.cli import load_trained, main, read_matrix, write_matrix
from hbtucker.tensor import load_counts

CONFIG = """schema_version = 1
seed = 5
[model]
p = 2
dims = [12, 5, 4]
K = [2, 2]
lam = 20
[sampler]
burn_in = 4
total_sweeps = 10
thin = 2
[eval]
G = 20
folds = 3
"""


@pytest.fixture()
def workdir(tmp_path):
    (tmp_path / "run.toml").write_text(CONFIG)
    assert main(["generate", "--config", str(tmp_path / "run.toml"), "--out-dir", str(tmp_path / "gen")]) == 0
    return tmp_path


def test_generate_fit_evaluate_audit(workdir, capsys):
    cfg, gen, fit = str(workdir / "run.toml"), workdir / "gen", workdir / "fit"
    t = load_counts(gen / "counts.tsv")
    assert t.dims == (12, 5, 4) and np.all(t.lam == 20)
    assert main(["fit", "--config", cfg, "--counts", str(gen / "counts.tsv"), "--out-dir", str(fit)]) == 0
    header = (fit / "diagnostics.csv").read_text().splitlines()[0]
    assert header.startswith("chain,sweep,log_joint,K_1,K_2")
    model = load_trained(fit)
    assert model.K == (2, 2) and all(np.allclose(p.sum(axis=1), 1) for p in model.psi)
    assert main(["evaluate", "--config", cfg, "--fit-dir", str(fit), "--counts", str(gen / "counts.tsv"), "--out-dir", str(workdir / "ev")]) == 0
    summary = json.loads((workdir / "ev" / "summary.json").read_text())
    assert np.isfinite(summary["total"])
    capsys.readouterr()
    assert main(["audit", "--snapshot", str(fit)]) == 0
    assert "audit passed" in capsys.readouterr().out


def test_audit_of_corrupted_snapshot_exits_three(workdir):
    state = json.loads((workdir / "gen" / "state.json").read_text())
    state["n"][0][0] += 1
    (workdir / "gen" / "state.json").write_text(json.dumps(state))
    assert main(["audit", "--snapshot", str(workdir / "gen")]) == 3


def test_dims_mismatch_names_both(workdir, capsys):
    bad = workdir / "bad.tsv"
    bad.write_text("#dims 12 5 3\n1\t1\t1\t2\n")
    code = main(["fit", "--config", str(workdir / "run.toml"), "--counts", str(bad), "--out-dir", str(workdir / "x")])
    err = capsys.readouterr().err
    assert code == 2
    assert "(12, 5, 3)" in err and "(12, 5, 4)" in err


def test_usage_and_data_errors(workdir):
    assert main(["frobnicate"]) == 1
    assert main(["fit", "--config", str(workdir / "run.toml")]) == 1
    assert main(["fit", "--config", str(workdir / "missing.toml"), "--counts", "x"]) == 2
    (workdir / "extra.toml").write_text(CONFIG + "bogus = 1\n")
    assert main(["generate", "--config", str(workdir / "extra.toml"), "--out-dir", str(workdir / "y")]) == 2


def test_cross_validation_outputs(workdir):
    out = workdir / "cv"
    code = main(["cv", "--config", str(workdir / "run.toml"), "--counts", str(workdir / "gen" / "counts.tsv"), "--out-dir", str(out), "--emit-plot-data"])
    assert code == 0
    header = (out / "cv.csv").read_text().splitlines()[0].split(",")
    assert {"mean", "stdev", "gene_topics", "pathway_topics", "total_topics"} <= set(header)
    folds = json.loads((out / "cv_folds.json").read_text())
    assert folds and (out / "plot_data.json").exists()


def test_properties_command(capsys):
    assert main(["properties", "--model", "independent-crp", "--n", "3"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["exchangeability"] == "holds"
    assert main(["properties", "--model", "dirichlet-swap"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["separable"] == "1/8" and report["separable_swapped"] == "1/9"
    assert main(["properties", "--model", "generalized-ncrp", "--gamma", "1", "0"]) == 1


def test_matrix_round_trip(tmp_path):
    mat = np.random.default_rng(0).dirichlet(np.ones(4), size=3)
    write_matrix(tmp_path / "m.csv", mat)
    assert np.array_equal(read_matrix(tmp_path / "m.csv"), mat)

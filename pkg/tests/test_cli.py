"""End-to-end command-line tests: subcommand pipelines over real config
files, artifact inventories, exit codes, and the error JSON contract.
"""

import json
import subprocess
import sys

import pytest

from mixborrow.cli import main


def write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)


@pytest.fixture(scope="module")
def dlnm_run(tmp_path_factory):
    """simulate -> fit pipeline shared by the summarize tests."""
    root = tmp_path_factory.mktemp("dlnm")
    sim_cfg = write(root / "sim.cfg",
                    "[simulate]\nkind = simA\nn = 30\nP = 2\nL = 4\n"
                    "seed = 5\n")
    sim_out = root / "sim"
    assert main(["simulate", "--config", sim_cfg, "--out", str(sim_out)]) == 0
    fit_cfg = write(root / "fit.cfg",
                    "[model]\nkind = dlnm\nP = 2\nL = 4\nK = 4\nC = 4\n"
                    "[chain]\nn_iter = 40\nburn_in = 20\nthin = 2\n"
                    f"[paths]\ndata = {sim_out}/data.csv\n")
    fit_out = root / "fit"
    assert main(["fit", "--config", fit_cfg, "--out", str(fit_out),
                 "--seed", "1"]) == 0
    return root, fit_cfg, sim_out, fit_out


def test_simulate_artifacts(dlnm_run):
    _, _, sim_out, _ = dlnm_run
    for name in ("data.csv", "truth.json", "manifest.json"):
        assert (sim_out / name).exists()
    truth = json.loads((sim_out / "truth.json").read_text())
    assert truth["kind"] == "simA" and truth["seed"] == 5
    with open(sim_out / "data.csv") as fh:
        header = fh.readline().strip().split(",")
    assert header[:4] == ["y1", "y2", "y3", "y4"]
    assert "x1_l1" in header and "x2_l4" in header


def test_fit_artifacts(dlnm_run):
    _, _, _, fit_out = dlnm_run
    expected = ["chain1.csv", "chain1_loglik.csv", "chain1_meta.json",
                "heatmap_beta.csv", "heatmap_theta.csv", "waic.json",
                "manifest.json"]
    expected += [f"erf_k{k}_j{j}.csv" for k in range(1, 5)
                 for j in range(1, 3)]
    for name in expected:
        assert (fit_out / name).exists(), name
    meta = json.loads((fit_out / "chain1_meta.json").read_text())
    assert meta["seed"] == 1 and meta["spec_hash"]
    waic = json.loads((fit_out / "waic.json").read_text())
    assert set(waic) == {"waic", "lppd", "p_waic"}


def test_fit_rerun_is_byte_identical(dlnm_run):
    root, fit_cfg, _, fit_out = dlnm_run
    again = root / "fit_again"
    assert main(["fit", "--config", fit_cfg, "--out", str(again),
                 "--seed", "1"]) == 0
    for name in ("chain1.csv", "erf_k1_j1.csv", "heatmap_beta.csv",
                 "waic.json", "manifest.json"):
        assert (fit_out / name).read_bytes() == (again / name).read_bytes()


def test_summarize_from_dump(dlnm_run, tmp_path):
    root, _, sim_out, fit_out = dlnm_run
    cfg = write(root / "summ.cfg",
                "[model]\nkind = dlnm\nP = 2\nL = 4\nK = 4\nC = 4\n"
                f"[paths]\nchain = {fit_out}/chain1\n"
                f"data = {sim_out}/data.csv\n")
    out = tmp_path / "summ"
    assert main(["summarize", "--config", cfg, "--out", str(out)]) == 0
    for name in ("waic.json", "heatmap_beta.csv", "erf_k1_j1.csv"):
        assert (out / name).exists()
    assert main(["summarize", "--config", cfg, "--out", str(out),
                 "--requests", "waic"]) == 0


def test_unknown_request_is_a_validation_error(dlnm_run, tmp_path, capsys):
    root, _, sim_out, fit_out = dlnm_run
    cfg = write(root / "summ2.cfg",
                f"[paths]\nchain = {fit_out}/chain1\n")
    out = tmp_path / "bad"
    code = main(["summarize", "--config", cfg, "--out", str(out),
                 "--requests", "mystery"])
    assert code == 1
    payload = json.loads(capsys.readouterr().err.strip())
    assert payload["type"] == "validation"
    assert "mystery" in payload["error"]
    on_disk = json.loads((out / "error.json").read_text())
    assert on_disk == payload


def test_missing_config_and_data(tmp_path, capsys):
    assert main(["fit", "--config", str(tmp_path / "absent.cfg"),
                 "--out", str(tmp_path)]) == 1
    cfg = write(tmp_path / "fit.cfg",
                "[model]\nkind = dlnm\nP = 2\nL = 4\n"
                "[paths]\ndata = /no/such/file.csv\n")
    assert main(["fit", "--config", cfg, "--out", str(tmp_path)]) == 1
    capsys.readouterr()


def test_corrupt_chain_dump_is_a_runtime_error(tmp_path, capsys):
    (tmp_path / "chain1.csv").write_text("xi\n1.0\n")
    cfg = write(tmp_path / "s.cfg", f"[paths]\nchain = {tmp_path}/chain1\n")
    code = main(["summarize", "--config", cfg, "--out", str(tmp_path),
                 "--requests", "waic"])
    assert code == 2
    payload = json.loads(capsys.readouterr().err.strip())
    assert payload["type"] == "runtime"


def test_bad_thread_env_is_rejected(dlnm_run, tmp_path, monkeypatch, capsys):
    root, fit_cfg, _, _ = dlnm_run
    monkeypatch.setenv("MIXBORROW_THREADS", "many")
    assert main(["fit", "--config", fit_cfg,
                 "--out", str(tmp_path / "x")]) == 1
    capsys.readouterr()


def test_importance_pipeline(tmp_path, capsys):
    sim_cfg = write(tmp_path / "sim.cfg",
                    "[simulate]\nkind = simB1\nn = 40\nseed = 2\n")
    sim_out = tmp_path / "sim"
    assert main(["simulate", "--config", sim_cfg, "--out", str(sim_out)]) == 0
    fit_cfg = write(tmp_path / "fit.cfg",
                    "[model]\nkind = mim\nP = 10\nJ = 2\nK = 4\nC = 4\n"
                    "[chain]\nn_iter = 20\nburn_in = 10\n"
                    f"[paths]\ndata = {sim_out}/data.csv\n")
    fit_out = tmp_path / "fit"
    assert main(["fit", "--config", fit_cfg, "--out", str(fit_out),
                 "--seed", "3"]) == 0
    imp_cfg = write(tmp_path / "imp.cfg",
                    "[model]\nkind = mim\nP = 10\nJ = 2\nK = 4\nC = 4\n"
                    f"[paths]\nchain = {fit_out}/chain1\n"
                    f"data = {sim_out}/data.csv\n")
    imp_out = tmp_path / "imp"
    assert main(["importance", "--config", imp_cfg,
                 "--out", str(imp_out)]) == 0
    with open(imp_out / "importance.csv") as fh:
        rows = fh.read().strip().splitlines()
    assert rows[0] == "outcome,exposure,mean,lower,upper,excursions"
    assert len(rows) == 1 + 4 * 10
    # lagged kinds are rejected for importance
    bad_cfg = write(tmp_path / "bad.cfg",
                    "[model]\nkind = dlnm\nP = 2\nL = 4\n"
                    f"[paths]\nchain = {fit_out}/chain1\n"
                    f"data = {sim_out}/data.csv\n")
    assert main(["importance", "--config", bad_cfg,
                 "--out", str(imp_out)]) == 1
    capsys.readouterr()


def test_study_subcommand(tmp_path, capsys):
    cfg = write(tmp_path / "study.cfg",
                "[study]\nkind = simA\nn = 30\nP = 2\nL = 4\nn_reps = 1\n"
                "estimators = clustered,no_clustering\n"
                "n_iter = 20\nburn_in = 10\n")
    out = tmp_path / "study"
    assert main(["study", "--config", cfg, "--out", str(out),
                 "--seed", "1"]) == 0
    with open(out / "metrics.csv") as fh:
        rows = fh.read().strip().splitlines()
    assert rows[0] == "rep,estimator,mse_omega,mse_f,mse_surface"
    assert len(rows) == 3
    agg = json.loads((out / "aggregate.json").read_text())
    assert set(agg["aggregate"]) == {"clustered", "no_clustering"}
    # cached rerun completes without refitting and reproduces metrics.csv
    before = (out / "metrics.csv").read_bytes()
    assert main(["study", "--config", cfg, "--out", str(out),
                 "--seed", "1"]) == 0
    assert (out / "metrics.csv").read_bytes() == before
    bad = write(tmp_path / "bad.cfg",
                "[study]\nkind = simA\nn = 30\nn_reps = 1\n"
                "estimators = mystery\n")
    assert main(["study", "--config", bad, "--out", str(out)]) == 1
    capsys.readouterr()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mixborrow.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("fit", "simulate", "study", "summarize", "importance"):
        assert name in proc.stdout

"""File-format round trips: dataset CSVs in both column schemas, flat
configs, chain dumps with meta blocks, and reproducibility manifests.
"""

import json

import numpy as np
import pytest

from mixborrow.io import (RunConfig, coerce, read_chain_dump, read_config,
                          read_dataset_csv, write_chain_dump, write_config,
                          write_dataset_csv, write_manifest)
from mixborrow.model import Dataset, build_dlnm_spec
from mixborrow.sampler import run_chain

RNG = np.random.default_rng(99)


def test_lagged_dataset_roundtrip(tmp_path):
    n, P, L, K = 12, 2, 3, 2
    Y = RNG.standard_normal((n, K))
    X = RNG.standard_normal((n, P * L))
    Z = RNG.standard_normal((n, 2))
    path = str(tmp_path / "d.csv")
    write_dataset_csv(path, Y, X, model_kind="dlnm", L=L, Z=Z)
    data = read_dataset_csv(path, "dlnm")
    assert np.array_equal(data.Y, Y)
    assert np.array_equal(data.Xstar, X)
    assert np.array_equal(data.Z, Z)
    assert data.exposure_names[0] == "x1_l1"
    assert data.exposure_names[-1] == f"x{P}_l{L}"


def test_plain_dataset_roundtrip(tmp_path):
    Y = RNG.standard_normal((8, 1))
    X = RNG.standard_normal((8, 4))
    path = str(tmp_path / "d.csv")
    write_dataset_csv(path, Y, X, model_kind="mim")
    data = read_dataset_csv(path, "mim")
    assert np.array_equal(data.Xstar, X)
    assert data.exposure_names == ("x1", "x2", "x3", "x4")
    assert data.Z is None


def test_missing_columns_are_named(tmp_path):
    path = str(tmp_path / "d.csv")
    with open(path, "w") as fh:
        fh.write("y1,x1_l1,x2_l2\n1.0,2.0,3.0\n4.0,5.0,6.0\n")
    with pytest.raises(ValueError, match="missing exposure column x1_l2"):
        read_dataset_csv(path, "dlnm")
    with open(path, "w") as fh:
        fh.write("x1,x2\n1.0,2.0\n3.0,4.0\n")
    with pytest.raises(ValueError, match="no outcome columns"):
        read_dataset_csv(path, "mim")


def test_config_roundtrip_and_validation(tmp_path):
    cfg = RunConfig(model={"kind": "dlnm", "P": "2", "L": "4"},
                    chain={"n_iter": "100", "seed": "3"},
                    paths={"data": "d.csv"})
    path = str(tmp_path / "run.cfg")
    write_config(path, cfg)
    back = read_config(path)
    assert back.model == cfg.model
    assert back.chain == cfg.chain
    assert back.paths == cfg.paths
    with open(path, "a") as fh:
        fh.write("\n[mystery]\nkey = 1\n")
    with pytest.raises(ValueError, match="unknown config section"):
        read_config(path)
    with pytest.raises(ValueError, match="not found"):
        read_config(str(tmp_path / "absent.cfg"))


def test_config_inline_comments(tmp_path):
    path = str(tmp_path / "run.cfg")
    with open(path, "w") as fh:
        fh.write("[model]\nP = 3  # three exposures\n")
    assert read_config(path).model["P"] == "3"


def test_coerce_types():
    block = {"a": "2", "b": "yes", "c": "off", "d": "oops"}
    assert coerce(block, "a", int) == 2
    assert coerce(block, "b", bool) is True
    assert coerce(block, "c", bool) is False
    assert coerce(block, "missing", float, 1.5) == 1.5
    with pytest.raises(ValueError, match="d="):
        coerce(block, "d", int)
    with pytest.raises(ValueError):
        coerce(block, "d", bool)


def test_chain_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    X = rng.standard_normal((15, 6))
    Y = rng.standard_normal((15, 2))
    spec = build_dlnm_spec(P=2, L=3, K=2, C=3)
    chain = run_chain(spec, Dataset(Y=Y, Xstar=X), n_iter=8, seed=4)
    prefix = str(tmp_path / "chain1")
    csv_path, ll_path, meta_path = write_chain_dump(prefix, chain)
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
    assert "xi" in header
    assert "Z_beta[0,0]" in header
    back = read_chain_dump(prefix)
    assert back.n_draws == chain.n_draws
    assert np.array_equal(back.loglik, chain.loglik)
    assert back.meta["seed"] == chain.meta["seed"]
    assert back.meta["spec_hash"] == chain.meta["spec_hash"]
    for d1, d2 in zip(chain.draws, back.draws):
        for key in d1:
            a1, a2 = np.asarray(d1[key]), np.asarray(d2[key])
            assert a1.shape == a2.shape
            assert np.array_equal(a1, a2)
        assert d2["Z_beta"].dtype.kind == "i"


def test_chain_dump_rejects_empty(tmp_path):
    from mixborrow.sampler import ChainOutput
    empty = ChainOutput(draws=[], loglik=np.zeros((0, 1, 1)), meta={})
    with pytest.raises(ValueError):
        write_chain_dump(str(tmp_path / "c"), empty)


def test_manifest_contents(tmp_path):
    path = str(tmp_path / "manifest.json")
    write_manifest(path, "fit", "[model]\nP = 2\n", 42, "abc123",
                   extra={"n_chains": 3})
    with open(path) as fh:
        m = json.load(fh)
    assert m["command"] == "fit"
    assert m["seed"] == 42
    assert m["spec_hash"] == "abc123"
    assert m["n_chains"] == 3
    assert "numpy" in m["versions"] and "python" in m["versions"]

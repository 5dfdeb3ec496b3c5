"""File formats for the batch front end: dataset CSVs, flat config files,
chain dumps with meta blocks, and reproducibility manifests.
"""

from __future__ import annotations

import configparser
import csv
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .model import Dataset
from .sampler import ChainOutput

# dataset CSV column conventions
#   outcomes   y1..yK
#   exposures  x<p>_l<l> (distributed-lag kinds) or x<p> (index/additive kinds)
#   covariates z* (any name starting with z)

LAGGED_KINDS = ("dlnm", "biomarker", "nonseparable_dlnm")


def _fmt(v: float) -> str:
    # repr round-trips doubles exactly, keeping reruns byte-identical
    return repr(float(v))


def read_dataset_csv(path: str, model_kind: str = "dlnm") -> Dataset:
    """Load a dataset CSV into Y, Xstar (exposure-major stacking), Z."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    data = np.asarray(rows, dtype=float)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    cols = {name: data[:, i] for i, name in enumerate(header)}

    K = sum(1 for h in header if h.startswith("y") and h[1:].isdigit())
    if K == 0:
        raise ValueError("no outcome columns: expected y1..yK")
    y_names = [f"y{k}" for k in range(1, K + 1)]
    for name in y_names:
        if name not in cols:
            raise ValueError(f"missing outcome column {name}")
    Y = np.column_stack([cols[n] for n in y_names])

    if model_kind in LAGGED_KINDS:
        lagged = [h for h in header if h.startswith("x") and "_l" in h]
        if not lagged:
            raise ValueError("no exposure columns: expected x<p>_l<l>")
        P = max(int(h[1:h.index("_")]) for h in lagged)
        L = max(int(h[h.index("_l") + 2:]) for h in lagged)
        x_names = [f"x{p}_l{l}" for p in range(1, P + 1)
                   for l in range(1, L + 1)]
    else:
        plain = [h for h in header
                 if h.startswith("x") and h[1:].isdigit()]
        if not plain:
            raise ValueError("no exposure columns: expected x<p>")
        P = max(int(h[1:]) for h in plain)
        x_names = [f"x{p}" for p in range(1, P + 1)]
    for name in x_names:
        if name not in cols:
            raise ValueError(f"missing exposure column {name}")
    X = np.column_stack([cols[n] for n in x_names])

    z_names = [h for h in header if h.startswith("z")]
    Z = np.column_stack([cols[n] for n in z_names]) if z_names else None
    return Dataset(Y=Y, Xstar=X, Z=Z,
                   outcome_names=tuple(y_names),
                   exposure_names=tuple(x_names),
                   covariate_names=tuple(z_names))


def write_dataset_csv(path: str, Y: np.ndarray, X: np.ndarray,
                      model_kind: str = "dlnm", L: int | None = None,
                      Z: np.ndarray | None = None) -> None:
    """Emit a dataset in the standard column schema."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, K = Y.shape
    if model_kind in LAGGED_KINDS:
        if L is None or X.shape[1] % L:
            raise ValueError("lagged schema needs L dividing the exposure count")
        P = X.shape[1] // L
        x_names = [f"x{p}_l{l}" for p in range(1, P + 1)
                   for l in range(1, L + 1)]
    else:
        x_names = [f"x{p}" for p in range(1, X.shape[1] + 1)]
    header = [f"y{k}" for k in range(1, K + 1)] + x_names
    blocks = [Y, X]
    if Z is not None:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        header += [f"z{j}" for j in range(1, Z.shape[1] + 1)]
        blocks.append(Z)
    M = np.hstack(blocks)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in M:
            w.writerow([_fmt(v) for v in row])


# ---- run configuration ----------------------------------------------------

@dataclass
class RunConfig:
    """Flat configuration mirroring the model, prior, and chain controls."""

    model: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)
    chain: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    study: dict = field(default_factory=dict)
    importance: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)


_SECTIONS = ("model", "hyper", "chain", "paths", "study", "importance",
             "simulate")


def read_config(path: str) -> RunConfig:
    """Parse the flat key-value config with [section] headers."""
    if not os.path.exists(path):
        raise ValueError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh, source=path)
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        getattr(cfg, section).update(dict(parser[section]))
    return cfg


def write_config(path: str, cfg: RunConfig) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for section in _SECTIONS:
        block = getattr(cfg, section)
        if block:
            parser[section] = {k: str(v) for k, v in block.items()}
    with open(path, "w") as fh:
        parser.write(fh)


def coerce(block: dict, key: str, cast, default=None):
    """Typed lookup with a default; raises a named error on bad values."""
    if key not in block:
        return default
    raw = block[key]
    try:
        if cast is bool:
            if str(raw).lower() in ("1", "true", "yes", "on"):
                return True
            if str(raw).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return cast(raw)
    except (TypeError, ValueError):
        raise ValueError(f"config value {key}={raw!r} is not a valid "
                         f"{cast.__name__}") from None


# ---- chain dumps ------------------------------------------------------------

def _flat_columns(name: str, arr) -> list:
    a = np.asarray(arr)
    if a.ndim == 0:
        return [(name, ())]
    return [(f"{name}[{','.join(map(str, idx))}]", idx)
            for idx in np.ndindex(*a.shape)]


def write_chain_dump(prefix: str, chain: ChainOutput) -> tuple:
    """Write `<prefix>.csv` (one row per draw, columns `<param>[index]`),
    `<prefix>_loglik.csv`, and `<prefix>_meta.json` holding the seed, spec
    hash, and parameter shapes needed to reload the dump.
    """
    if chain.n_draws == 0:
        raise ValueError("no draws")
    first = chain.draws[0]
    names = sorted(first)
    shapes = {n: list(np.asarray(first[n]).shape) for n in names}
    header = []
    for n in names:
        header.extend(col for col, _ in _flat_columns(n, first[n]))

    csv_path = prefix + ".csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for draw in chain.draws:
            row = []
            for n in names:
                row.extend(_fmt(v) for v in np.asarray(draw[n], dtype=float).ravel())
            w.writerow(row)

    ll_path = prefix + "_loglik.csv"
    n_draws, n, K = chain.loglik.shape
    with open(ll_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"ll[{i},{k}]" for i in range(n) for k in range(K)])
        for row in chain.loglik.reshape(n_draws, -1):
            w.writerow([_fmt(v) for v in row])

    meta_path = prefix + "_meta.json"
    meta = dict(chain.meta)
    meta["shapes"] = shapes
    meta["loglik_shape"] = [n_draws, n, K]
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, ll_path, meta_path


_INT_PARAMS = {"Z_beta", "Z_theta"}


def read_chain_dump(prefix: str) -> ChainOutput:
    """Reload a chain dump written by write_chain_dump."""
    with open(prefix + "_meta.json") as fh:
        meta = json.load(fh)
    shapes = {n: tuple(s) for n, s in meta.pop("shapes").items()}
    ll_shape = tuple(meta.pop("loglik_shape"))
    with open(prefix + ".csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [np.asarray(r, dtype=float) for r in reader]
    draws = []
    for row in rows:
        draw = {}
        pos = 0
        for n in sorted(shapes):
            size = int(np.prod(shapes[n], dtype=int)) if shapes[n] else 1
            chunk = row[pos:pos + size]
            pos += size
            val = chunk.reshape(shapes[n]) if shapes[n] else float(chunk[0])
            if n in _INT_PARAMS:
                val = np.asarray(val, dtype=int)
            draw[n] = val
        draws.append(draw)
    with open(prefix + "_loglik.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        ll = np.asarray([r for r in reader], dtype=float).reshape(ll_shape)
    return ChainOutput(draws=draws, loglik=ll, meta=meta)


# ---- manifests --------------------------------------------------------------

def write_manifest(path: str, command: str, config_text: str,
                   seed, spec_digest: str | None, extra: dict | None = None) -> None:
    """Reproducibility manifest: everything needed to re-run bit-identically."""
    manifest = {
        "command": command,
        "config": config_text,
        "seed": seed,
        "spec_hash": spec_digest,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
    }
    try:
        import scipy
        manifest["versions"]["scipy"] = scipy.__version__
    except ImportError:
        pass
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

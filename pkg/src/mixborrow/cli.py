"""Batch front end: `fit`, `simulate`, `study`, `summarize`, `importance`
subcommands over flat config files. Exit codes: 0 ok, 1 validation error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import io as mio
from .model import (Dataset, HyperParams, build_additive_spec,
                    build_dlnm_spec, build_mim_spec)
from .sampler import ChainOutput, GibbsSampler, spec_hash

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

_HYPER_FIELDS = tuple(HyperParams.__dataclass_fields__)


class ValidationError(ValueError):
    """Configuration or input problems: exit code 1."""


def _thread_count(args) -> int:
    if getattr(args, "threads", None):
        return int(args.threads)
    env = os.environ.get("MIXBORROW_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"MIXBORROW_THREADS={env!r} is not an integer")
    return 1


def _out_dir(args, cfg: mio.RunConfig) -> str:
    out = getattr(args, "out", None) or cfg.paths.get("out")
    if not out:
        raise ValidationError("no output directory: pass --out or set [paths] out")
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args) -> mio.RunConfig:
    if not getattr(args, "config", None):
        raise ValidationError("--config is required")
    try:
        return mio.read_config(args.config)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _build_hyper(cfg: mio.RunConfig) -> HyperParams:
    kwargs = {}
    for key, raw in cfg.hyper.items():
        if key not in _HYPER_FIELDS:
            raise ValidationError(f"unknown hyperparameter {key!r}")
        cast = int if key == "gridsize" else float
        kwargs[key] = mio.coerce(cfg.hyper, key, cast)
    try:
        return HyperParams(**kwargs)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _build_spec(cfg: mio.RunConfig, hyper: HyperParams):
    m = cfg.model
    kind = m.get("kind", "dlnm")
    P = mio.coerce(m, "P", int)
    K = mio.coerce(m, "K", int, 1)
    C = mio.coerce(m, "C", int)
    if P is None:
        raise ValidationError("[model] P is required")
    common = dict(K=K, C=C, hyper=hyper)
    method = m.get("theta_update_method")
    if method:
        common["theta_update_method"] = method
    ortho = mio.coerce(m, "orthogonalize_random_effects", bool)
    if ortho is not None:
        common["orthogonalize_random_effects"] = ortho
    try:
        if kind in ("dlnm", "biomarker"):
            L = mio.coerce(m, "L", int)
            if L is None:
                raise ValidationError("[model] L is required for lagged kinds")
            return build_dlnm_spec(P=P, L=L, m=mio.coerce(m, "m", int),
                                   model_kind=kind, **common)
        if kind == "nonseparable_dlnm":
            from .nonseparable import build_nonseparable_spec
            L = mio.coerce(m, "L", int)
            if L is None:
                raise ValidationError("[model] L is required for lagged kinds")
            return build_nonseparable_spec(P=P, L=L, **common)
        if kind == "mim":
            J = mio.coerce(m, "J", int, 2)
            return build_mim_spec(P=P, J=J, **common)
        if kind == "additive":
            return build_additive_spec(P=P, **common)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    raise ValidationError(f"unknown model kind {kind!r}")


def _load_data(cfg: mio.RunConfig, kind: str) -> Dataset:
    path = cfg.paths.get("data")
    if not path:
        raise ValidationError("no dataset: set [paths] data")
    if not os.path.exists(path):
        raise ValidationError(f"dataset not found: {path}")
    try:
        return mio.read_dataset_csv(path, kind)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _combine_chains(chains) -> ChainOutput:
    draws = [d for ch in chains for d in ch.draws]
    loglik = np.concatenate([ch.loglik for ch in chains], axis=0)
    meta = dict(chains[0].meta)
    meta["n_chains"] = len(chains)
    meta["seeds"] = [ch.meta["seed"] for ch in chains]
    return ChainOutput(draws=draws, loglik=loglik, meta=meta)


# ---- subcommands -------------------------------------------------------------

def cmd_fit(args) -> int:
    from . import posterior as post

    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    hyper = _build_hyper(cfg)
    spec = _build_spec(cfg, hyper)
    data = _load_data(cfg, spec.model_kind)

    n_iter = mio.coerce(cfg.chain, "n_iter", int, 2000)
    burn_in = mio.coerce(cfg.chain, "burn_in", int, n_iter // 2)
    thin = mio.coerce(cfg.chain, "thin", int, 1)
    n_chains = mio.coerce(cfg.chain, "n_chains", int, 1)
    seed = args.seed if args.seed is not None else mio.coerce(cfg.chain, "seed", int, 0)

    def one_chain(i):
        if spec.model_kind == "nonseparable_dlnm":
            from .nonseparable import NonseparableSampler
            sam = NonseparableSampler(spec, data, seed=seed + i)
        else:
            sam = GibbsSampler(spec, data, seed=seed + i)
        return sam.run(n_iter=n_iter, burn_in=burn_in, thin=thin)

    threads = _thread_count(args)
    if threads > 1 and n_chains > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chains = list(pool.map(one_chain, range(n_chains)))
    else:
        chains = [one_chain(i) for i in range(n_chains)]

    for i, ch in enumerate(chains, start=1):
        mio.write_chain_dump(os.path.join(out, f"chain{i}"), ch)
    combined = _combine_chains(chains)

    fitted_spec = spec
    if spec.model_kind != "nonseparable_dlnm":
        from .model import finalize_spec
        fitted_spec = finalize_spec(spec, data.Xstar)
        post.write_erf_csvs(out, combined, fitted_spec, data)
    hm = post.pairwise_clustering(combined)
    post.write_heatmap_csv(out, hm)
    waic, lppd, p_waic = post.compute_waic(combined)
    with open(os.path.join(out, "waic.json"), "w") as fh:
        json.dump({"waic": waic, "lppd": lppd, "p_waic": p_waic}, fh, indent=2)
        fh.write("\n")
    mio.write_manifest(os.path.join(out, "manifest.json"), "fit",
                       open(args.config).read(), seed, spec_hash(fitted_spec),
                       extra={"n_chains": n_chains})
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulate import SIM_KINDS, SimScenario, generate

    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    block = cfg.simulate
    kind = block.get("kind")
    if kind not in SIM_KINDS:
        raise ValidationError(f"[simulate] kind must be one of {SIM_KINDS}")
    n = mio.coerce(block, "n", int)
    if n is None:
        raise ValidationError("[simulate] n is required")
    seed = args.seed if args.seed is not None else mio.coerce(block, "seed", int, 0)
    defaults = {"simA": (4, 5, 52), "simB1": (4, 10, 0), "simB2": (4, 10, 0),
                "simB3": (4, 10, 0), "nonsep": (4, 5, 52),
                "identifiability": (4, 5, 52)}
    K0, P0, L0 = defaults[kind]
    scn = SimScenario(kind=kind, n=n,
                      K=mio.coerce(block, "K", int, K0),
                      P=mio.coerce(block, "P", int, P0),
                      L=mio.coerce(block, "L", int, L0), seed=seed)
    try:
        data, truth = generate(scn)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None

    lagged = scn.L > 0
    mio.write_dataset_csv(os.path.join(out, "data.csv"), data.Y, data.Xstar,
                          model_kind="dlnm" if lagged else "mim",
                          L=scn.L if lagged else None)
    sidecar = {
        "kind": kind, "n": scn.n, "K": scn.K, "P": scn.P, "L": scn.L,
        "seed": seed,
        "noise_sd": None if truth.noise_sd is None else truth.noise_sd.tolist(),
        "f_labels": None if truth.f_labels is None else truth.f_labels.tolist(),
        "omega_labels": (None if truth.omega_labels is None
                         else truth.omega_labels.tolist()),
        "omegas": None if truth.omegas is None else truth.omegas.tolist(),
        "meta": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                 for k, v in truth.meta.items()},
    }
    with open(os.path.join(out, "truth.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    mio.write_manifest(os.path.join(out, "manifest.json"), "simulate",
                       open(args.config).read(), seed, None)
    return EXIT_OK


def cmd_study(args) -> int:
    from .simulate import (ESTIMATORS, SIM_KINDS, SimScenario,
                           run_replication_study)

    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    block = cfg.study
    kind = block.get("kind")
    if kind not in SIM_KINDS:
        raise ValidationError(f"[study] kind must be one of {SIM_KINDS}")
    n = mio.coerce(block, "n", int)
    n_reps = mio.coerce(block, "n_reps", int)
    if n is None or n_reps is None:
        raise ValidationError("[study] n and n_reps are required")
    estimators = [e.strip() for e in
                  block.get("estimators", "clustered,no_clustering").split(",")]
    for est in estimators:
        if est not in ESTIMATORS:
            raise ValidationError(f"unknown estimator {est!r}")
    defaults = {"simA": (4, 5, 52), "simB1": (4, 10, 0), "simB2": (4, 10, 0),
                "simB3": (4, 10, 0), "nonsep": (4, 5, 52),
                "identifiability": (4, 5, 52)}
    K0, P0, L0 = defaults[kind]
    scn = SimScenario(kind=kind, n=n,
                      K=mio.coerce(block, "K", int, K0),
                      P=mio.coerce(block, "P", int, P0),
                      L=mio.coerce(block, "L", int, L0))
    master_seed = (args.seed if args.seed is not None
                   else mio.coerce(block, "master_seed", int, 0))

    def progress(res):
        print(f"rep {res['rep']} {res['estimator']}: "
              + ("ok" if "mse_f" in res else f"FAILED {res.get('error')}"),
              flush=True)

    result = run_replication_study(
        scn, estimators, n_reps=n_reps,
        n_iter=mio.coerce(block, "n_iter", int, 2000),
        burn_in=mio.coerce(block, "burn_in", int, 1000),
        thin=mio.coerce(block, "thin", int, 2),
        cache_dir=os.path.join(out, "cache"),
        master_seed=master_seed,
        n_workers=_thread_count(args),
        progress=progress)

    with open(os.path.join(out, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rep", "estimator", "mse_omega", "mse_f", "mse_surface"])
        for row in sorted(result["rows"],
                          key=lambda r: (r["rep"], r["estimator"])):
            w.writerow([row["rep"], row["estimator"],
                        repr(float(row["mse_omega"])),
                        repr(float(row["mse_f"])),
                        repr(float(row.get("mse_surface", float("nan"))))])
    with open(os.path.join(out, "aggregate.json"), "w") as fh:
        json.dump({"aggregate": result["aggregate"],
                   "failures": result["failures"]}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    mio.write_manifest(os.path.join(out, "manifest.json"), "study",
                       open(args.config).read(), master_seed, None)
    return EXIT_OK


_SUMMARIZE_REQUESTS = ("erf", "heatmap", "waic")


def cmd_summarize(args) -> int:
    from . import posterior as post
    from .model import finalize_spec

    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    prefix = cfg.paths.get("chain")
    if not prefix:
        raise ValidationError("no chain dump: set [paths] chain")
    if not os.path.exists(prefix + ".csv"):
        raise ValidationError(f"chain dump not found: {prefix}.csv")
    requests = [r.strip() for r in
                (args.requests or "erf,heatmap,waic").split(",")]
    for r in requests:
        if r not in _SUMMARIZE_REQUESTS:
            raise ValidationError(f"unknown request {r!r}; expected one of "
                                  f"{_SUMMARIZE_REQUESTS}")
    chain = mio.read_chain_dump(prefix)
    if chain.n_draws == 0:
        raise ValidationError("no draws")

    if "heatmap" in requests:
        post.write_heatmap_csv(out, post.pairwise_clustering(chain))
    if "waic" in requests:
        waic, lppd, p_waic = post.compute_waic(chain)
        with open(os.path.join(out, "waic.json"), "w") as fh:
            json.dump({"waic": waic, "lppd": lppd, "p_waic": p_waic},
                      fh, indent=2)
            fh.write("\n")
    if "erf" in requests:
        hyper = _build_hyper(cfg)
        spec = _build_spec(cfg, hyper)
        if spec.model_kind == "nonseparable_dlnm":
            raise ValidationError("erf summaries need an index-model kind")
        data = _load_data(cfg, spec.model_kind)
        post.write_erf_csvs(out, chain, finalize_spec(spec, data.Xstar), data)
    mio.write_manifest(os.path.join(out, "manifest.json"), "summarize",
                       open(args.config).read(), chain.meta.get("seed"),
                       chain.meta.get("spec_hash"))
    return EXIT_OK


def cmd_importance(args) -> int:
    from .importance import exposure_importance, surface_draws_from_chain
    from .model import finalize_spec

    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    prefix = cfg.paths.get("chain")
    if not prefix:
        raise ValidationError("no chain dump: set [paths] chain")
    if not os.path.exists(prefix + ".csv"):
        raise ValidationError(f"chain dump not found: {prefix}.csv")
    hyper = _build_hyper(cfg)
    spec = _build_spec(cfg, hyper)
    if spec.model_kind not in ("mim", "additive"):
        raise ValidationError("importance needs unlagged exposures "
                              "(mim or additive kinds)")
    data = _load_data(cfg, spec.model_kind)
    chain = mio.read_chain_dump(prefix)
    if chain.n_draws == 0:
        raise ValidationError("no draws")
    spec_f = finalize_spec(spec, data.Xstar)
    surfaces = surface_draws_from_chain(chain, spec_f, data)

    P = data.Xstar.shape[1]
    with open(os.path.join(out, "importance.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["outcome", "exposure", "mean", "lower", "upper",
                    "excursions"])
        for k in range(spec_f.n_outcomes):
            for p in range(P):
                res = exposure_importance(surfaces[k], data.Xstar, p)
                w.writerow([k + 1, p + 1, repr(res["mean"]),
                            repr(res["lower"]), repr(res["upper"]),
                            res["excursions"]])
    mio.write_manifest(os.path.join(out, "manifest.json"), "importance",
                       open(args.config).read(), chain.meta.get("seed"),
                       chain.meta.get("spec_hash"))
    return EXIT_OK


# ---- entry point --------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixborrow",
        description="Bayesian multivariate index models for exposure mixtures")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {"fit": cmd_fit, "simulate": cmd_simulate, "study": cmd_study,
                "summarize": cmd_summarize, "importance": cmd_importance}
    for name, fn in handlers.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        if name == "summarize":
            p.add_argument("--requests", default=None)
        p.set_defaults(handler=fn)
    return parser


def _emit_error(args, kind: str, message: str) -> None:
    payload = {"error": message, "type": kind}
    print(json.dumps(payload), file=sys.stderr)
    out = getattr(args, "out", None)
    if out and os.path.isdir(out):
        with open(os.path.join(out, "error.json"), "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        _emit_error(args, "validation", str(exc))
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        _emit_error(args, "runtime", repr(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Exposure-importance metrics: the proportion of mixture-surface variance
attributable to one exposure (or group), with a Nadaraya-Watson kernel
estimator of the conditional mean and a regression-plugin alternative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConditionalModel:
    """How to estimate E[f | x_{-p}]. kind 'kernel' uses a Gaussian product
    kernel with Silverman-rule bandwidths; 'regression_plugin' treats x_p
    given x_{-p} as Gaussian around caller-supplied predictions.
    """

    kind: str = "kernel"
    bandwidth: float | None = None
    plugin_mean: np.ndarray | None = None
    plugin_sd: float | None = None
    n_nodes: int = 16

    def __post_init__(self):
        if self.kind not in ("kernel", "regression_plugin"):
            raise ValueError(f"unknown conditional model kind {self.kind!r}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.kind == "regression_plugin" and self.plugin_mean is None:
            raise ValueError("regression_plugin needs fitted means of x_p")


def silverman_bandwidths(X: np.ndarray) -> np.ndarray:
    """Per-column rule-of-thumb bandwidths 1.06 sigma n^(-1/5), floored at
    a small positive value for degenerate columns.
    """
    n = X.shape[0]
    sd = X.std(axis=0, ddof=1) if n > 1 else np.ones(X.shape[1])
    return np.maximum(1.06 * sd * n ** (-0.2), 1e-8)


def kernel_conditional_mean(fvals: np.ndarray, X: np.ndarray, cols,
                            queries: np.ndarray,
                            bandwidth: float | np.ndarray | None = None,
                            loo: bool = False) -> np.ndarray:
    """Nadaraya-Watson estimate of E[f | x_cols' = q] for each query row q
    over the conditioning columns `cols'` = complement of `cols`.

    fvals are the surface values f(x_i) at the observed rows; the average
    integrates out the columns in `cols` under their empirical conditional
    law. If every kernel weight underflows for some query, falls back to
    the 5 nearest neighbors and logs a warning.
    """
    fvals = np.asarray(fvals, dtype=float)
    X = np.asarray(X, dtype=float)
    cols = np.atleast_1d(cols)
    keep = np.setdiff1d(np.arange(X.shape[1]), cols)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if X.shape[0] == 1:
        return np.full(len(queries), fvals[0])
    if keep.size == 0:
        # conditioning on nothing: plain mean
        return np.full(len(queries), fvals.mean())
    Xk = X[:, keep]
    if bandwidth is None:
        h = silverman_bandwidths(Xk)
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=float),
                            (keep.size,)).copy()
    out = np.empty(len(queries))
    fell_back = 0
    for qi, q in enumerate(queries):
        u = (Xk - q) / h
        logw = -0.5 * np.sum(u * u, axis=1)
        if loo:
            # queries are the sample rows themselves: drop the self term so
            # the estimate does not collapse onto the observed surface value
            logw[qi] = -np.inf
        logw -= logw[np.isfinite(logw)].max()
        w = np.exp(logw)
        tot = w.sum()
        if not np.isfinite(tot) or tot <= 0.0:
            near = np.argsort(np.sum(u * u, axis=1))[:5]
            out[qi] = fvals[near].mean()
            fell_back += 1
            continue
        out[qi] = float(w @ fvals) / tot
    if fell_back:
        log.warning("kernel weights underflowed for %d queries; "
                    "used 5-NN fallback", fell_back)
    return out


def _plugin_conditional_mean(fsurf, X: np.ndarray, p: int,
                             cond: ConditionalModel) -> np.ndarray:
    """E[f | x_-p] under x_p | x_-p ~ N(plugin_mean_i, plugin_sd^2), the
    surface integrated over x_p by Gauss-Hermite quadrature. fsurf must be
    callable on a modified exposure matrix.
    """
    mean = np.asarray(cond.plugin_mean, dtype=float)
    if mean.shape[0] != X.shape[0]:
        raise ValueError("plugin means must align with observations")
    sd = cond.plugin_sd
    if sd is None:
        sd = float(np.std(X[:, p] - mean, ddof=1))
    nodes, weights = np.polynomial.hermite_e.hermegauss(cond.n_nodes)
    weights = weights / weights.sum()
    cm = np.zeros(X.shape[0])
    Xmod = X.copy()
    for node, w in zip(nodes, weights):
        Xmod[:, p] = mean + sd * node
        cm += w * np.asarray(fsurf(Xmod), dtype=float)
    return cm


def _phi_from_surface(fdraw, X: np.ndarray, cols,
                      cond: ConditionalModel) -> tuple[float, float]:
    """One draw's importance: 1 - Var(E[f|x_-cols]) / Var(f), both variances
    empirical (1/n). Returns (clipped phi, pre-clip phi). fdraw is either
    the vector of surface values at the rows of X (kernel mode) or a
    callable surface (regression_plugin mode).
    """
    cols = np.atleast_1d(cols)
    if cond.kind == "kernel":
        fvals = np.asarray(fdraw, dtype=float)
        keep = np.setdiff1d(np.arange(X.shape[1]), cols)
        cm = kernel_conditional_mean(fvals, X, cols, X[:, keep],
                                     bandwidth=cond.bandwidth, loo=True)
    else:
        if not callable(fdraw):
            raise TypeError("regression_plugin mode needs a callable surface")
        if cols.size != 1:
            raise ValueError("regression_plugin supports single exposures")
        fvals = np.asarray(fdraw(X), dtype=float)
        cm = _plugin_conditional_mean(fdraw, X, int(cols[0]), cond)
    total = fvals.var()
    if total <= 0.0:
        return np.nan, np.nan
    raw = 1.0 - cm.var() / total
    return float(min(max(raw, 0.0), 1.0)), float(raw)


def exposure_importance(f_draws: np.ndarray, X: np.ndarray, p: int,
                        cond: ConditionalModel | None = None) -> dict:
    """Importance of exposure p for a set of posterior surface draws.

    f_draws is n_draws x n (surface values at the observed exposures) or a
    single n-vector. Phi is computed per draw then summarized; pre-clip
    excursions outside [0, 1] are counted and logged.
    """
    return group_importance(f_draws, X, [p], cond)


def group_importance(f_draws: np.ndarray, X: np.ndarray, group,
                     cond: ConditionalModel | None = None) -> dict:
    """Importance of a group of exposures: the same variance ratio with the
    whole group integrated out against its complement.
    """
    X = np.asarray(X, dtype=float)
    group = np.atleast_1d(group)
    if group.size == 0:
        raise ValueError("group must be nonempty")
    if group.size >= X.shape[1]:
        raise ValueError("group must be a proper subset of the exposures")
    cond = cond or ConditionalModel()
    if callable(f_draws):
        f_draws = [f_draws]
    elif not (isinstance(f_draws, (list, tuple)) and f_draws
              and callable(f_draws[0])):
        f_draws = np.atleast_2d(np.asarray(f_draws, dtype=float))
    phis, raws = [], []
    excursions = 0
    for fv in f_draws:
        phi, raw = _phi_from_surface(fv, X, group, cond)
        if np.isnan(phi):
            continue
        if raw < 0.0 or raw > 1.0:
            excursions += 1
        phis.append(phi)
        raws.append(raw)
    if not phis:
        log.warning("total surface variance was zero for every draw")
        return {"mean": np.nan, "lower": np.nan, "upper": np.nan,
                "excursions": 0, "n_draws": 0}
    if excursions:
        log.info("importance pre-clip excursions outside [0,1]: %d of %d "
                 "(extremes %.3f..%.3f)", excursions, len(raws),
                 min(raws), max(raws))
    phis = np.asarray(phis)
    lo, hi = np.quantile(phis, [0.025, 0.975])
    return {"mean": float(phis.mean()), "lower": float(lo),
            "upper": float(hi), "excursions": excursions,
            "n_draws": len(phis)}


def regression_plugin(predictions: np.ndarray,
                      residual_sd: float | None = None,
                      n_nodes: int = 16) -> ConditionalModel:
    """Wrap caller-supplied fitted conditional means of x_p given x_{-p}
    (e.g. from a random forest) as a ConditionalModel. x_p is treated as
    Gaussian around the predictions; residual_sd defaults to the empirical
    residual standard deviation.
    """
    predictions = np.asarray(predictions, dtype=float)
    return ConditionalModel(kind="regression_plugin",
                            plugin_mean=predictions, plugin_sd=residual_sd,
                            n_nodes=n_nodes)


def surface_draws_from_chain(chain, spec, data) -> np.ndarray:
    """n_draws x n matrix of total-surface values sum_j f_kj stacked over
    outcomes is usually what callers want per outcome; this helper returns
    the per-outcome list [n_draws x n] indexed by k.
    """
    from .posterior import PosteriorView
    view = PosteriorView(chain, spec, data)
    spec_f = view.spec
    n = data.n
    out = []
    for k in range(spec_f.n_outcomes):
        acc = np.zeros((chain.n_draws, n))
        for j in range(spec_f.n_indices):
            thetas, betas = view.pair_draws(k, j)
            for i, (t, b) in enumerate(zip(thetas, betas)):
                acc[i] += view.basis.f_eval(view.xt[:, j, :] @ t, b)
        out.append(acc)
    return out

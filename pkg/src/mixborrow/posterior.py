"""Posterior summaries: exposure-response curves, overall mixture effects,
lagged contrasts, pairwise clustering probabilities, and WAIC.

All operations are pure post-processing over an immutable ChainOutput plus
the finalized spec and dataset used to fit it. Curve-type summaries return
CurveSummary objects with equal-tailed pointwise 95% intervals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import Dataset, ModelSpec, compute_index_inputs, finalize_spec
from .splines import make_centered_basis


@dataclass(frozen=True)
class CurveSummary:
    """Pointwise posterior summary of a curve over a grid."""

    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if np.any(self.lower > self.mean + 1e-12) or \
                np.any(self.mean > self.upper + 1e-12):
            raise ValueError("interval ordering violated")


@dataclass(frozen=True)
class ClusterHeatmap:
    """Pairwise posterior co-clustering probabilities over (k, j) pairs."""

    labels: list
    prob_beta: np.ndarray
    prob_theta: np.ndarray

    def __post_init__(self):
        for M in (self.prob_beta, self.prob_theta):
            if np.max(np.abs(M - M.T)) > 1e-12:
                raise ValueError("heatmap must be symmetric")
            if np.max(np.abs(np.diag(M) - 1.0)) > 1e-12:
                raise ValueError("heatmap diagonal must be 1")


class PosteriorView:
    """Binds a chain to the spec and data it was fit on, exposing per-pair
    draw extraction and curve evaluation.
    """

    def __init__(self, chain, spec: ModelSpec, data: Dataset):
        if chain.n_draws == 0:
            raise ValueError("no draws")
        self.chain = chain
        self.spec = finalize_spec(spec, data.Xstar)
        self.data = data
        self.basis = make_centered_basis(self.spec.spline_config)
        self.xt = compute_index_inputs(self.spec, data.Xstar)

    def pair_draws(self, k: int, j: int):
        """(thetas, betas) arrays of the atoms pair (k, j) points at."""
        thetas = np.array([d["theta_atoms"][d["Z_theta"][k, j]]
                           for d in self.chain.draws])
        betas = np.array([d["beta_atoms"][d["Z_beta"][k, j]]
                          for d in self.chain.draws])
        return thetas, betas

    def f_draws_at(self, k: int, j: int, points: np.ndarray) -> np.ndarray:
        """Evaluate f_kj at index values `points`, one row per draw."""
        thetas, betas = self.pair_draws(k, j)
        out = np.empty((len(thetas), len(points)))
        for i, (t, b) in enumerate(zip(thetas, betas)):
            out[i] = self.basis.f_eval(points, b)
        return out

    def index_reference(self, k: int, j: int) -> np.ndarray:
        """Per-draw index value of the exposure-mean profile for pair (k,j)."""
        xbar = self.xt[:, j, :].mean(axis=0)
        thetas, _ = self.pair_draws(k, j)
        return thetas @ xbar


def _summarize(grid, draws_matrix) -> CurveSummary:
    lo, hi = np.quantile(draws_matrix, [0.025, 0.975], axis=0)
    return CurveSummary(grid=np.asarray(grid, dtype=float),
                        mean=draws_matrix.mean(axis=0), lower=lo, upper=hi)


def align_signs(draws: np.ndarray) -> np.ndarray:
    """Resolve the sign non-identifiability of unit-norm weight draws by
    flipping each draw so its coordinate of largest mean magnitude is
    nonnegative. Curve values f(x'theta) are unaffected because the spline
    coefficients flip jointly; only reported profiles need alignment.
    """
    draws = np.asarray(draws, dtype=float)
    ref = np.argmax(np.abs(draws.mean(axis=0)))
    signs = np.where(draws[:, ref] < 0.0, -1.0, 1.0)
    return draws * signs[:, None]


def erf_summary(chain, spec, data, k: int, j: int,
                grid: np.ndarray) -> CurveSummary:
    """Exposure-response curve for pair (k, j): per draw, f_kj on the grid
    minus f_kj at that draw's exposure-mean index value.
    """
    view = chain if isinstance(chain, PosteriorView) \
        else PosteriorView(chain, spec, data)
    grid = np.asarray(grid, dtype=float)
    lo, hi = view.spec.spline_config.knot_range
    if grid.min() < lo or grid.max() > hi:
        raise ValueError("grid outside the basis range")
    fg = view.f_draws_at(k, j, grid)
    ref = view.index_reference(k, j)
    thetas, betas = view.pair_draws(k, j)
    f_ref = np.array([view.basis.f_eval(np.array([r]), b)[0]
                      for r, b in zip(ref, betas)])
    return _summarize(grid, fg - f_ref[:, None])


def overall_mixture_effect(chain, spec, data, k: int,
                           quantiles: np.ndarray) -> CurveSummary:
    """Overall mixture effect for outcome k: per draw, the change in
    sum_j f_kj when every exposure column sits at its empirical quantile q,
    relative to the all-at-median profile.
    """
    view = chain if isinstance(chain, PosteriorView) \
        else PosteriorView(chain, spec, data)
    quantiles = np.asarray(quantiles, dtype=float)
    spec_f = view.spec
    J = spec_f.n_indices
    qgrid = np.quantile(view.data.Xstar, quantiles, axis=0)  # Q x M
    xmed = np.quantile(view.data.Xstar, 0.5, axis=0)
    psi = spec_f.reduction_basis
    eff = np.zeros((view.chain.n_draws, len(quantiles)))
    for j in range(J):
        A = spec_f.index_designs[j]
        xq = qgrid @ A.T
        xm = A @ xmed
        if psi is not None:
            xq = xq @ psi
            xm = psi.T @ xm
        thetas, betas = view.pair_draws(k, j)
        for i, (t, b) in enumerate(zip(thetas, betas)):
            sq = xq @ t
            sm = float(xm @ t)
            eff[i] += view.basis.f_eval(sq, b) - view.basis.f_eval(
                np.array([sm]), b)[0]
    return _summarize(quantiles, eff)


def lagged_contrast(chain, spec, data, k: int, p: int, l: int,
                    lo: float | None = None,
                    hi: float | None = None) -> dict:
    """Single-lag contrast for DLNM pair (k, p): move exposure p at lag l
    from `lo` to `hi` (default mean -/+ 1 SD) holding all other lags at
    their means; returns posterior mean and 95% interval of the change in
    f_kp.
    """
    view = chain if isinstance(chain, PosteriorView) \
        else PosteriorView(chain, spec, data)
    spec_f = view.spec
    if spec_f.model_kind not in ("dlnm", "biomarker"):
        raise ValueError("lagged contrasts require a distributed-lag model")
    L = spec_f.index_rows
    col = view.data.Xstar[:, p * L + l]
    mu, sd = col.mean(), col.std()
    lo = mu - sd if lo is None else lo
    hi = mu + sd if hi is None else hi
    A = spec_f.index_designs[p]
    xbar = A @ view.data.Xstar.mean(axis=0)
    x_lo, x_hi = xbar.copy(), xbar.copy()
    x_lo[l], x_hi[l] = lo, hi
    psi = spec_f.reduction_basis
    if psi is not None:
        x_lo, x_hi = psi.T @ x_lo, psi.T @ x_hi
    thetas, betas = view.pair_draws(k, p)
    vals = np.empty(len(thetas))
    for i, (t, b) in enumerate(zip(thetas, betas)):
        pts = np.array([x_hi @ t, x_lo @ t])
        f2, f1 = view.basis.f_eval(pts, b)
        vals[i] = f2 - f1
    qlo, qhi = np.quantile(vals, [0.025, 0.975])
    return {"mean": float(vals.mean()), "lower": float(qlo),
            "upper": float(qhi), "lo": float(lo), "hi": float(hi)}


def pairwise_clustering(chain, K: int | None = None,
                        J: int | None = None) -> ClusterHeatmap:
    """Fraction of draws in which each pair of (k, j) cells shares a beta
    atom (prob_beta) or a theta atom (prob_theta).
    """
    Zb = np.array([d["Z_beta"] for d in chain.draws])
    Zt = np.array([d["Z_theta"] for d in chain.draws])
    n_draws, K_, J_ = Zb.shape
    fb = Zb.reshape(n_draws, K_ * J_)
    ft = Zt.reshape(n_draws, K_ * J_)
    prob_b = (fb[:, :, None] == fb[:, None, :]).mean(axis=0)
    prob_t = (ft[:, :, None] == ft[:, None, :]).mean(axis=0)
    labels = [(k, j) for k in range(K_) for j in range(J_)]
    return ClusterHeatmap(labels=labels, prob_beta=prob_b, prob_theta=prob_t)


def compute_waic(chain) -> tuple[float, float, float]:
    """WAIC from the stored pointwise log-likelihood matrix:
    lppd - p_waic penalty form, -2(lppd - p_waic), log-sum-exp stabilized.
    """
    ll = chain.loglik if hasattr(chain, "loglik") else np.asarray(chain)
    if ll.shape[0] < 2:
        raise ValueError("WAIC needs at least 2 draws")
    S = ll.shape[0]
    mx = ll.max(axis=0)
    lppd = float(np.sum(mx + np.log(np.mean(np.exp(ll - mx), axis=0))))
    p_waic = float(np.sum(ll.var(axis=0, ddof=1)))
    waic = -2.0 * (lppd - p_waic)
    return waic, lppd, p_waic


# ---- CSV emitters -----------------------------------------------------------

def write_curve_csv(path: str, cs: CurveSummary) -> None:
    """One row per gridpoint: grid, mean, lower, upper."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid", "mean", "lower", "upper"])
        for row in zip(cs.grid, cs.mean, cs.lower, cs.upper):
            w.writerow([repr(float(v)) for v in row])


def read_curve_csv(path: str) -> CurveSummary:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    arr = np.array(rows[1:], dtype=float)
    return CurveSummary(grid=arr[:, 0], mean=arr[:, 1],
                        lower=arr[:, 2], upper=arr[:, 3])


def write_heatmap_csv(out_dir: str, hm: ClusterHeatmap) -> list:
    """Writes heatmap_beta.csv and heatmap_theta.csv under `out_dir`.
    Columns and rows are labeled k<k>_j<j>. Returns the paths written.
    """
    import os

    paths = []
    for name, M in (("beta", hm.prob_beta), ("theta", hm.prob_theta)):
        path = os.path.join(out_dir, f"heatmap_{name}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            labels = [f"k{k}_j{j}" for k, j in hm.labels]
            w.writerow(["pair"] + labels)
            for lab, row in zip(labels, M):
                w.writerow([lab] + [repr(float(v)) for v in row])
        paths.append(path)
    return paths


def write_erf_csvs(out_dir: str, chain, spec, data,
                   n_grid: int = 41) -> list:
    """Emit erf_k<k>_j<j>.csv for every pair over the central index range."""
    import os
    view = PosteriorView(chain, spec, data)
    lo, hi = view.spec.spline_config.knot_range
    pad = 0.1 * (hi - lo)
    grid = np.linspace(lo + pad, hi - pad, n_grid)
    paths = []
    for k in range(view.spec.n_outcomes):
        for j in range(view.spec.n_indices):
            cs = erf_summary(view, None, None, k, j, grid)
            path = os.path.join(out_dir, f"erf_k{k + 1}_j{j + 1}.csv")
            write_curve_csv(path, cs)
            paths.append(path)
    return paths

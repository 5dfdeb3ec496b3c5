"""Posterior-summary oracles: WAIC against a direct log-sum-exp computation,
clustering heatmaps against hand-counted draws, sign alignment, and the
curve summaries' structural guarantees.
"""

import numpy as np
import pytest
from scipy.special import logsumexp

from mixborrow.model import Dataset, build_dlnm_spec, finalize_spec
from mixborrow.posterior import (ClusterHeatmap, CurveSummary, align_signs,
                                 compute_waic, erf_summary, lagged_contrast,
                                 overall_mixture_effect, pairwise_clustering,
                                 read_curve_csv, write_curve_csv,
                                 write_erf_csvs, write_heatmap_csv)
from mixborrow.sampler import ChainOutput, run_chain

RNG = np.random.default_rng(55)


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(1)
    n, P, L, K = 40, 2, 4, 2
    X = rng.standard_normal((n, P * L))
    Y = rng.standard_normal((n, K))
    spec = build_dlnm_spec(P=P, L=L, K=K, C=3)
    data = Dataset(Y=Y, Xstar=X)
    chain = run_chain(spec, data, n_iter=60, burn_in=20, seed=2)
    return finalize_spec(spec, X), data, chain


def test_waic_matches_logsumexp_oracle():
    ll = RNG.standard_normal((50, 7, 2))
    waic, lppd, p_waic = compute_waic(ll)
    S = ll.shape[0]
    want_lppd = float(np.sum(logsumexp(ll, axis=0) - np.log(S)))
    want_p = float(np.sum(ll.var(axis=0, ddof=1)))
    assert abs(lppd - want_lppd) < 1e-10
    assert abs(p_waic - want_p) < 1e-10
    assert abs(waic - (-2.0 * (want_lppd - want_p))) < 1e-10
    with pytest.raises(ValueError):
        compute_waic(ll[:1])


def test_pairwise_clustering_hand_counted():
    draws = [
        {"Z_beta": np.array([[0, 0], [1, 0]]),
         "Z_theta": np.array([[0, 1], [1, 1]])},
        {"Z_beta": np.array([[0, 1], [1, 0]]),
         "Z_theta": np.array([[0, 0], [0, 0]])},
    ]
    chain = ChainOutput(draws=draws, loglik=np.zeros((2, 1, 2)), meta={})
    hm = pairwise_clustering(chain)
    # pairs in row-major order: (0,0), (0,1), (1,0), (1,1)
    assert hm.prob_beta[0, 1] == 0.5      # share beta in draw 1 only
    assert hm.prob_beta[0, 2] == 0.0
    assert hm.prob_beta[1, 3] == 1.0      # share beta in both draws
    assert hm.prob_theta[0, 1] == 0.5
    assert np.all(np.diag(hm.prob_beta) == 1.0)


def test_align_signs_collapses_antipodal_draws():
    base = np.array([0.6, -0.8])
    draws = np.vstack([base if i % 2 else -base for i in range(40)])
    aligned = align_signs(draws)
    assert np.allclose(np.abs(aligned @ base), base @ base)
    assert np.linalg.norm(aligned.mean(axis=0)) == pytest.approx(1.0)


def test_curve_summary_validates_interval_order():
    g = np.linspace(0, 1, 5)
    CurveSummary(grid=g, mean=g, lower=g - 1, upper=g + 1)
    with pytest.raises(ValueError):
        CurveSummary(grid=g, mean=g, lower=g + 1, upper=g + 2)


def test_heatmap_validates_shape():
    M = np.eye(3)
    ClusterHeatmap(labels=[(0, 0), (0, 1), (0, 2)], prob_beta=M, prob_theta=M)
    bad = M.copy()
    bad[0, 1] = 0.5
    with pytest.raises(ValueError):
        ClusterHeatmap(labels=[(0, 0), (0, 1), (0, 2)], prob_beta=bad,
                       prob_theta=M)


def test_erf_summary_and_reference_centering(fitted):
    spec, data, chain = fitted
    lo, hi = spec.spline_config.knot_range
    grid = np.linspace(0.5 * lo, 0.5 * hi, 21)
    cs = erf_summary(chain, spec, data, 0, 1, grid)
    assert cs.mean.shape == (21,)
    assert np.all(cs.lower <= cs.upper + 1e-12)
    with pytest.raises(ValueError):
        erf_summary(chain, spec, data, 0, 1, np.array([2 * hi]))


def test_overall_mixture_effect_zero_at_the_median(fitted):
    spec, data, chain = fitted
    cs = overall_mixture_effect(chain, spec, data, 0,
                                np.array([0.25, 0.5, 0.75]))
    assert abs(cs.mean[1]) < 1e-12
    assert cs.lower[1] == pytest.approx(0.0, abs=1e-12)


def test_lagged_contrast_degenerate_and_default(fitted):
    spec, data, chain = fitted
    res = lagged_contrast(chain, spec, data, k=0, p=1, l=2, lo=0.3, hi=0.3)
    assert res["mean"] == 0.0 and res["lower"] == 0.0 and res["upper"] == 0.0
    res = lagged_contrast(chain, spec, data, k=1, p=0, l=1)
    assert res["lower"] <= res["mean"] <= res["upper"]


def test_lagged_contrast_requires_a_lagged_model(fitted):
    _, data, chain = fitted
    from mixborrow.model import build_mim_spec
    mim = build_mim_spec(P=8, J=2, K=2)
    with pytest.raises(ValueError):
        lagged_contrast(chain, mim, data, k=0, p=0, l=0)


def test_curve_csv_roundtrip(tmp_path, fitted):
    spec, data, chain = fitted
    grid = np.linspace(-0.5, 0.5, 11)
    cs = erf_summary(chain, spec, data, 1, 0, grid)
    path = tmp_path / "curve.csv"
    write_curve_csv(str(path), cs)
    back = read_curve_csv(str(path))
    assert np.array_equal(back.grid, cs.grid)
    assert np.array_equal(back.mean, cs.mean)
    assert np.array_equal(back.lower, cs.lower)
    assert np.array_equal(back.upper, cs.upper)


def test_csv_emitters_write_expected_files(tmp_path, fitted):
    spec, data, chain = fitted
    paths = write_erf_csvs(str(tmp_path), chain, spec, data, n_grid=7)
    names = sorted(p.split("/")[-1] for p in paths)
    assert names == sorted(f"erf_k{k}_j{j}.csv"
                           for k in (1, 2) for j in (1, 2))
    hm_paths = write_heatmap_csv(str(tmp_path), pairwise_clustering(chain))
    assert sorted(p.split("/")[-1] for p in hm_paths) == \
        ["heatmap_beta.csv", "heatmap_theta.csv"]
    for p in paths + hm_paths:
        assert (tmp_path / p.split("/")[-1]).exists()


def test_posterior_view_rejects_empty_chain(fitted):
    spec, data, _ = fitted
    from mixborrow.posterior import PosteriorView
    empty = ChainOutput(draws=[], loglik=np.zeros((0, 1, 1)), meta={})
    with pytest.raises(ValueError):
        PosteriorView(empty, spec, data)

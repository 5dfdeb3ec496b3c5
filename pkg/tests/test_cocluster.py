"""Clustering-prior oracles: stick-breaking identities, joint pmf limits,
conjugate full conditionals checked by moment matching, and the dependence
parameter's Monte Carlo sign check.
"""

import math

import numpy as np
import pytest

from mixborrow.cocluster import (ClusterState, cluster_counts,
                                 gibbs_update_indicators,
                                 indicator_log_prior, initial_cluster_state,
                                 joint_indicator_pmf, stick_weights,
                                 update_concentrations, update_rho,
                                 update_stick_weights)
from mixborrow.model import HyperParams

RNG = np.random.default_rng(314)


def make_state(C=4, K=2, J=3, rho=0.0, seed=0):
    rng = np.random.default_rng(seed)
    st = initial_cluster_state(C, K, J, d=5, m=3, rng=rng)
    st.rho = rho
    return st


def test_stick_weights_match_manual_product():
    V = np.array([0.3, 0.5, 0.2, 1.0])
    pi = stick_weights(V)
    manual = [0.3, 0.7 * 0.5, 0.7 * 0.5 * 0.2, 0.7 * 0.5 * 0.8]
    assert np.allclose(pi, manual)
    assert abs(pi.sum() - 1.0) < 1e-14
    with pytest.raises(ValueError):
        stick_weights(np.array([0.3, 0.9]))


def test_joint_pmf_independence_and_diagonal_limits():
    pi_b = stick_weights(np.append(RNG.beta(1, 2, size=5), 1.0))
    pi_t = stick_weights(np.append(RNG.beta(1, 2, size=5), 1.0))
    pmf0 = joint_indicator_pmf(pi_b, pi_t, 0.0)
    assert np.max(np.abs(pmf0 - np.outer(pi_b, pi_t))) < 1e-15
    pmf_inf = joint_indicator_pmf(pi_b, pi_t, 1e12)
    assert np.trace(pmf_inf) > 1.0 - 1e-10
    assert abs(pmf_inf.sum() - 1.0) < 1e-12
    with pytest.raises(ValueError):
        joint_indicator_pmf(pi_b, pi_t, -0.1)


def test_indicator_log_prior_oracle():
    st = make_state(rho=1.3, seed=3)
    pmf = joint_indicator_pmf(stick_weights(st.V_beta),
                              stick_weights(st.V_theta), st.rho)
    manual = sum(math.log(pmf[st.Z_beta[k, j], st.Z_theta[k, j]])
                 for k in range(2) for j in range(3))
    assert abs(indicator_log_prior(st) - manual) < 1e-12


def test_gibbs_indicators_sample_the_prior_when_likelihood_is_flat():
    st = make_state(C=3, K=1, J=1, rho=2.0, seed=8)
    st.V_beta = np.array([0.5, 0.4, 1.0])
    st.V_theta = np.array([0.2, 0.7, 1.0])
    pmf = joint_indicator_pmf(stick_weights(st.V_beta),
                              stick_weights(st.V_theta), st.rho)
    rng = np.random.default_rng(9)
    counts = np.zeros((3, 3))
    n = 20_000
    for _ in range(n):
        gibbs_update_indicators(st, lambda k, j, c, which: 0.0, rng)
        counts[st.Z_beta[0, 0], st.Z_theta[0, 0]] += 1
    assert np.max(np.abs(counts / n - pmf)) < 0.01


def test_gibbs_indicators_follow_the_likelihood():
    st = make_state(C=3, K=2, J=2, rho=0.0, seed=10)
    rng = np.random.default_rng(11)

    def loglik(k, j, c, which):
        # overwhelming preference for cluster (k + j) mod 3 on both sides
        return 0.0 if c == (k + j) % 3 else -1e6

    gibbs_update_indicators(st, loglik, rng)
    want = np.array([[(k + j) % 3 for j in range(2)] for k in range(2)])
    assert np.array_equal(st.Z_beta, want)
    assert np.array_equal(st.Z_theta, want)


def test_nonfinite_likelihood_rejected():
    st = make_state(seed=12)
    with pytest.raises(FloatingPointError):
        gibbs_update_indicators(st, lambda *a: np.nan,
                                np.random.default_rng(0))


def test_stick_mh_accepts_everything_at_rho_zero():
    # at rho = 0 the proposal equals the full conditional, so every
    # non-boundary proposal is accepted
    hyper = HyperParams()
    st = make_state(C=5, K=3, J=4, rho=0.0, seed=13)
    rng = np.random.default_rng(14)
    total = 0
    accepted = 0
    for _ in range(200):
        accepted += update_stick_weights(st, hyper, "beta", rng)
        total += st.truncation - 1
    assert accepted == total


def test_stick_grid_method_runs_and_respects_bounds():
    hyper = HyperParams(gridsize=20)
    st = make_state(C=4, rho=1.0, seed=15)
    rng = np.random.default_rng(16)
    for _ in range(50):
        update_stick_weights(st, hyper, "theta", rng, method="grid")
        assert np.all(st.V_theta[:-1] > 0) and np.all(st.V_theta[:-1] < 1)
        assert st.V_theta[-1] == 1.0


def test_concentration_full_conditional_moments():
    # with the sticks held fixed the update is an exact Gamma draw whose
    # shape/rate are known in closed form
    hyper = HyperParams(a_beta=2.0, b_beta=3.0, a_theta=2.0, b_theta=3.0)
    st = make_state(C=6, seed=17)
    rng = np.random.default_rng(18)
    shape = hyper.a_beta + st.truncation - 1
    rate = hyper.b_beta - np.sum(np.log1p(-st.V_beta[:-1]))
    draws = []
    for _ in range(40_000):
        update_concentrations(st, hyper, rng)
        draws.append(st.alpha_beta)
    draws = np.asarray(draws)
    assert abs(draws.mean() - shape / rate) < 0.02 * shape / rate
    assert abs(draws.var() - shape / rate ** 2) < 0.05 * shape / rate ** 2


def test_rho_moves_up_under_perfect_coclustering():
    # Monte Carlo sign check: fully aligned indicator tables pull the
    # posterior mean of rho above its prior mean
    hyper = HyperParams(a_rho=1.0, b_rho=1.0, rw_sd=0.8)
    st = make_state(C=4, K=4, J=4, rho=1.0, seed=19)
    st.Z_beta[:] = np.arange(4)[:, None] % 4
    st.Z_theta[:] = st.Z_beta
    rng = np.random.default_rng(20)
    trace = []
    for _ in range(8000):
        update_rho(st, hyper, rng)
        trace.append(st.rho)
    prior_mean = hyper.a_rho / hyper.b_rho
    assert np.mean(trace[2000:]) > prior_mean


def test_cluster_counts_and_validate():
    st = make_state(C=4, seed=21)
    counts = cluster_counts(st.Z_beta, 4)
    assert counts.sum() == st.Z_beta.size
    st.validate()
    bad = ClusterState(Z_beta=st.Z_beta, Z_theta=st.Z_theta,
                       V_beta=np.array([0.5, 0.9]), V_theta=st.V_theta,
                       alpha_beta=1.0, alpha_theta=1.0, rho=0.0,
                       beta_atoms=st.beta_atoms, theta_atoms=st.theta_atoms)
    with pytest.raises(ValueError):
        bad.validate()

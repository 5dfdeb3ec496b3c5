"""Tensor-surface variant oracles: the collapsed design against an explicit
double loop, the Kronecker-sum penalty spectrum, and the modified sampler's
structural guarantees.
"""

import numpy as np
import pytest

from mixborrow.model import Dataset
from mixborrow.nonseparable import (NonseparableSampler, TensorBasis,
                                    build_nonseparable_spec,
                                    make_tensor_basis, run_nonseparable_chain,
                                    tensor_design, tensor_penalty,
                                    tensor_rank)

RNG = np.random.default_rng(88)


def test_tensor_design_matches_double_loop():
    L, d, m = 7, 4, 3
    x = RNG.standard_normal(L)
    R = RNG.standard_normal((L, d))
    Psi = RNG.standard_normal((L, m))
    row = tensor_design(x, R, Psi)
    manual = np.zeros(d * m)
    for a in range(d):
        for b in range(m):
            manual[a * m + b] = sum(R[l, a] * Psi[l, b] for l in range(L))
    assert np.max(np.abs(row - manual)) < 1e-12
    # callable dose basis gives the same answer
    assert np.allclose(tensor_design(x, lambda v: R, Psi), row)
    with pytest.raises(ValueError):
        tensor_design(x, R[:-1], Psi)


def test_tensor_penalty_is_the_kronecker_sum():
    d, m = 4, 3
    A = RNG.standard_normal((d, d))
    A = A @ A.T
    B = RNG.standard_normal((m, m))
    B = B @ B.T
    P = tensor_penalty(A, B, jitter=0.0)
    want = np.kron(A, np.eye(m)) + np.kron(np.eye(d), B)
    assert np.max(np.abs(P - want)) < 1e-12
    # spectrum is the set of pairwise eigenvalue sums
    ea = np.sort(np.linalg.eigvalsh(A))
    eb = np.sort(np.linalg.eigvalsh(B))
    pair = np.sort((ea[:, None] + eb[None, :]).ravel())
    assert np.max(np.abs(np.sort(np.linalg.eigvalsh(P)) - pair)) < 1e-9


def test_tensor_rank_counts_nonzero_pair_sums():
    A = np.diag([0.0, 0.0, 1.0])      # rank 1
    B = np.diag([0.0, 2.0])           # rank 1
    # pair sums: {0, 2, 0, 2, 1, 3} -> four nonzero
    assert tensor_rank(A, B) == 4
    assert tensor_rank(np.zeros((2, 2)), np.zeros((3, 3))) == 0


def test_jittered_penalty_is_positive_definite():
    basis = make_tensor_basis(2, 10, RNG.standard_normal((40, 20)))
    dose_pen = sum(b.penalty for b in basis.dose_bases) / 2
    P = tensor_penalty(dose_pen, basis.lag_penalty)
    assert np.linalg.eigvalsh(P).min() > 0


def test_make_tensor_basis_collapsed_rows():
    n, P, L = 25, 2, 8
    X = RNG.standard_normal((n, P * L))
    basis = make_tensor_basis(P, L, X, dose_n_basis=6, lag_n_basis=5)
    assert isinstance(basis, TensorBasis)
    lags = np.arange(1.0, L + 1.0)
    assert basis.lag_design.shape == (L, basis.lag_dim)
    for j in range(P):
        Xj = X[:, j * L:(j + 1) * L]
        for i in (0, n - 1):
            R = basis.dose_bases[j].design(Xj[i])
            want = tensor_design(Xj[i], R, basis.lag_design)
            assert np.max(np.abs(basis.collapsed[j][i] - want)) < 1e-12
    with pytest.raises(ValueError):
        make_tensor_basis(P, L, X[:, :-1])
    with pytest.raises(ValueError):
        make_tensor_basis(P, L, X, lag_n_basis=L + 1)


def tiny_fit_inputs(n=30, P=2, L=6, K=2, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, P * L))
    Y = rng.standard_normal((n, K))
    spec = build_nonseparable_spec(P=P, L=L, K=K, C=3)
    return spec, Dataset(Y=Y, Xstar=X)


def test_sampler_requires_the_tensor_kind():
    from mixborrow.model import build_dlnm_spec
    spec, data = tiny_fit_inputs(seed=1)
    plain = build_dlnm_spec(P=2, L=6, K=2)
    with pytest.raises(ValueError):
        NonseparableSampler(plain, data)


def test_chain_is_deterministic_and_mirrors_indicators():
    spec, data = tiny_fit_inputs(seed=2)
    out1 = run_nonseparable_chain(spec, data, n_iter=25, seed=5)
    out2 = run_nonseparable_chain(spec, data, n_iter=25, seed=5)
    for d1, d2 in zip(out1.draws, out2.draws):
        for key in d1:
            assert np.array_equal(np.asarray(d1[key]), np.asarray(d2[key]))
    for d in out1.draws:
        assert np.array_equal(d["Z_beta"], d["Z_theta"])
        assert d["rho"] == 0.0
        assert np.array_equal(d["theta_atoms"],
                              np.ones((spec.truncation, 1)))


def test_theta_machinery_is_disabled():
    spec, data = tiny_fit_inputs(seed=3)
    sampler = NonseparableSampler(spec, data, seed=6)
    for fn in (sampler.update_theta_atoms, sampler.update_lambda_theta):
        with pytest.raises(RuntimeError):
            fn()


def test_fitted_values_use_the_collapsed_design():
    spec, data = tiny_fit_inputs(seed=4)
    sampler = NonseparableSampler(spec, data, seed=7)
    sampler.sweep()
    cl = sampler.state.cluster
    for k in range(sampler.K):
        for j in range(sampler.J):
            want = sampler.B[j] @ cl.beta_atoms[cl.Z_beta[k, j]]
            assert np.max(np.abs(sampler.f_values(k, j) - want)) < 1e-12


def test_prior_draw_has_the_single_indicator_structure():
    spec, data = tiny_fit_inputs(seed=5)
    sampler = NonseparableSampler(spec, data, seed=8)
    sampler.draw_from_prior()
    cl = sampler.state.cluster
    assert np.array_equal(cl.Z_beta, cl.Z_theta)
    assert cl.rho == 0.0
    assert sampler.state.lambda_beta > 0

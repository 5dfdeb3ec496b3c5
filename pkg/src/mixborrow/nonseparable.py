"""Tensor-product distributed-lag variant: bi-dimensional dose-lag response
surfaces, one clustered coefficient vector per exposure-outcome pair, and the
modified sampler that reuses the shared scale/random-effect updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import cocluster
from .cocluster import V_CLAMP
from .model import Dataset, HyperParams, ModelSpec, build_dlnm_spec
from .sampler import ChainOutput, GibbsSampler, UpdateFlags
from .splines import (CenteredBasis, SplineConfig, apply_centering,
                      bspline_design, make_centered_basis,
                      second_derivative_penalty)


@dataclass(frozen=True)
class TensorBasis:
    """Marginal bases and collapsed designs for the tensor surface model.

    dose_bases holds one centered dose basis per exposure (knots from that
    exposure's pooled empirical range); lag_design is the centered L x m lag
    basis evaluated at lags 1..L; collapsed[j] is the n x (d*m) design whose
    row i is tensor_design(x_ij). Coefficient order is dose-major: column
    a*m + b pairs dose column a with lag column b.
    """

    dose_bases: tuple
    lag_design: np.ndarray
    lag_penalty: np.ndarray
    collapsed: tuple

    @property
    def dose_dim(self) -> int:
        return self.dose_bases[0].n_coef

    @property
    def lag_dim(self) -> int:
        return self.lag_design.shape[1]


def tensor_design(x: np.ndarray, R, Psi: np.ndarray) -> np.ndarray:
    """Collapsed design row b_ij = 1'[(R_ij kron 1') had (1' kron Psi)].

    The row-of-ones collapse of the elementwise product of the two Kronecker
    expansions is exactly sum_l R[l, a] Psi[l, b], laid out dose-major.
    R may be the evaluated L x d dose design or a callable applied to x.
    """
    x = np.asarray(x, dtype=float)
    Rmat = np.asarray(R(x) if callable(R) else R, dtype=float)
    Psi = np.asarray(Psi, dtype=float)
    if Rmat.shape[0] != x.size or Psi.shape[0] != x.size:
        raise ValueError("marginal bases must have one row per lag")
    return np.einsum("la,lb->ab", Rmat, Psi).ravel()


def tensor_penalty(dose_penalty: np.ndarray, lag_penalty: np.ndarray,
                   jitter: float = 1e-8) -> np.ndarray:
    """Kronecker-sum prior penalty (S_dose kron I_m) + (I_d kron S_lag).

    Both marginals enter in precision form; a small diagonal jitter keeps
    downstream factorizations safe despite the marginals' rank deficiency.
    """
    A = np.asarray(dose_penalty, dtype=float)
    B = np.asarray(lag_penalty, dtype=float)
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    d, m = A.shape[0], B.shape[0]
    P = np.kron(A, np.eye(m)) + np.kron(np.eye(d), B)
    return P + jitter * np.eye(d * m)


def tensor_rank(dose_penalty: np.ndarray, lag_penalty: np.ndarray,
                tol: float = 1e-10) -> int:
    """Rank of the unjittered Kronecker sum via its pairwise-sum spectrum."""
    ea = np.linalg.eigvalsh(0.5 * (dose_penalty + dose_penalty.T))
    eb = np.linalg.eigvalsh(0.5 * (lag_penalty + lag_penalty.T))
    sums = ea[:, None] + eb[None, :]
    scale = max(sums.max(), 1.0)
    return int(np.sum(sums > tol * scale))


def make_tensor_basis(P: int, L: int, Xstar: np.ndarray,
                      dose_n_basis: int = 8, degree: int = 3,
                      lag_n_basis: int | None = None) -> TensorBasis:
    """Build the per-exposure dose bases, the shared lag basis, and the
    collapsed n x (d*m) designs from the stacked exposure matrix.
    """
    X = np.asarray(Xstar, dtype=float)
    if X.ndim != 2 or X.shape[1] != P * L:
        raise ValueError("exposure matrix has the wrong number of columns")
    n = X.shape[0]
    lag_n_basis = min(8, L) if lag_n_basis is None else lag_n_basis
    if lag_n_basis > L:
        raise ValueError("lag basis size cannot exceed the lag count")

    lags = np.arange(1.0, L + 1.0)
    lag_cfg = SplineConfig(degree=min(degree, lag_n_basis - 1),
                           n_basis=lag_n_basis, knot_range=(1.0, float(L)))
    raw = bspline_design(lag_cfg, lags)
    Psi, T = apply_centering(raw)
    S_lag = T.T @ second_derivative_penalty(lag_cfg) @ T

    dose_bases = []
    collapsed = []
    for j in range(P):
        Xj = X[:, j * L:(j + 1) * L]
        lo, hi = float(Xj.min()), float(Xj.max())
        pad = 1e-8 * max(hi - lo, 1.0)
        cfg = SplineConfig(degree=degree, n_basis=dose_n_basis,
                           knot_range=(lo - pad, hi + pad))
        basis = make_centered_basis(cfg)
        dose_bases.append(basis)
        R = basis.design(Xj.ravel()).reshape(n, L, basis.n_coef)
        Bj = np.einsum("nla,lb->nab", R, Psi).reshape(n, -1)
        collapsed.append(Bj)
    return TensorBasis(dose_bases=tuple(dose_bases), lag_design=Psi,
                       lag_penalty=0.5 * (S_lag + S_lag.T),
                       collapsed=tuple(collapsed))


def build_nonseparable_spec(P: int, L: int, K: int = 1, C: int | None = None,
                            **kwargs) -> ModelSpec:
    """Spec for the tensor variant; shares the block-selector layout of the
    separable distributed-lag spec but flags the modified sampler.
    """
    return build_dlnm_spec(P, L, K=K, C=C, model_kind="nonseparable_dlnm",
                           **kwargs)


class NonseparableSampler(GibbsSampler):
    """Modified chain for the tensor surface model.

    Clustering is single-indicator: each (k, j) pair carries one indicator
    into shared coefficient atoms beta*_c of length d*m. There are no index
    weights, so every theta code path is disabled; the scale, random-effect,
    and fixed-effect updates are inherited unchanged.
    """

    def __init__(self, spec: ModelSpec, data: Dataset, seed=0,
                 flags: UpdateFlags | None = None,
                 v_update_method: str = "mh",
                 dose_n_basis: int = 8, lag_n_basis: int | None = None,
                 jitter: float = 1e-8):
        if spec.model_kind != "nonseparable_dlnm":
            raise ValueError("NonseparableSampler requires model_kind "
                             "'nonseparable_dlnm'")
        self.spec = spec
        self.data = data
        self.hyper = spec.hyper
        self.flags = flags or UpdateFlags()
        self.flags.theta_atoms = False
        self.flags.rho = False
        self.flags.lambda_theta = False
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.v_update_method = v_update_method

        self.n = data.n
        self.K = spec.n_outcomes
        self.J = spec.n_indices
        self.C = spec.truncation
        self.q = data.n_covariates
        if data.Y.shape[1] != self.K:
            raise ValueError("outcome count disagrees with the spec")
        L = spec.index_rows
        P = spec.n_indices
        self.tensor = make_tensor_basis(P, L, data.Xstar,
                                        dose_n_basis=dose_n_basis,
                                        lag_n_basis=lag_n_basis)
        self.B = self.tensor.collapsed
        self.d = self.tensor.dose_dim * self.tensor.lag_dim
        self.m = 1   # placeholder: no index weights in this variant

        # atoms are shared across exposures, so one penalty must serve all
        # per-exposure dose bases; average their centered penalties
        dose_pen = sum(b.penalty for b in self.tensor.dose_bases) / P
        self.Sigma0 = tensor_penalty(dose_pen, self.tensor.lag_penalty,
                                     jitter=jitter)
        self.P_rank = tensor_rank(dose_pen, self.tensor.lag_penalty)

        if data.Z is not None:
            ZtZ = data.Z.T @ data.Z
            if np.linalg.matrix_rank(ZtZ) < self.q:
                raise ValueError("collinear covariates rejected")
            self._ZtZ_chol = np.linalg.cholesky(ZtZ)

        self.state = self._initial_state()
        self._design_memo = {}
        self._resid_cache = None
        self.accept_counts = {"theta": 0, "theta_total": 0, "rho": 0,
                              "rho_total": 0, "lambda_theta": 0,
                              "lambda_theta_total": 0, "xi": 0, "xi_total": 0,
                              "sigma2": 0, "sigma2_total": 0,
                              "sticks": 0, "sticks_total": 0}
        self.importance_log = []

    # ---- state construction -------------------------------------------

    def _initial_state(self):
        state = super()._initial_state()
        cl = state.cluster
        cl.theta_atoms = np.ones((self.C, 1))
        cl.Z_theta = cl.Z_beta.copy()
        cl.rho = 0.0
        return state

    def draw_from_prior(self):
        h, rng = self.hyper, self.rng
        st = self.state
        cl = cocluster.initial_cluster_state(self.C, self.K, self.J, self.d,
                                             1, rng, h)
        cl.rho = 0.0
        pi = cocluster.stick_weights(cl.V_beta)
        Zb = rng.choice(self.C, size=(self.K, self.J), p=pi)
        cl.Z_beta = Zb
        cl.Z_theta = Zb.copy()
        cl.theta_atoms = np.ones((self.C, 1))
        st.lambda_beta = rng.gamma(h.a_lambda_beta, 1.0 / h.b_lambda_beta)
        st.lambda_theta = 1.0
        prior_cov = np.linalg.inv(st.lambda_beta * self.Sigma0)
        chol = np.linalg.cholesky(prior_cov)
        for c in range(self.C):
            cl.beta_atoms[c] = chol @ rng.standard_normal(self.d)
        st.cluster = cl
        st.u = rng.standard_normal(self.n)
        st.xi = 1.0 / rng.gamma(h.a_xi, 1.0 / h.b_xi)
        st.sigma2 = 1.0 / rng.gamma(h.a_sigma, 1.0 / h.b_sigma, size=self.K)
        st.beta0 = np.zeros(self.K)
        st.betaZ = np.zeros((self.K, self.q))

    # ---- designs ---------------------------------------------------------

    def _design(self, j: int, c: int) -> np.ndarray:
        # the collapsed design depends on the exposure only
        return self.B[j]

    def fixed_effect_columns(self) -> np.ndarray:
        cols = [np.ones((self.n, 1))]
        cols.extend(self.B)
        if self.q:
            cols.append(self.data.Z)
        return np.hstack(cols)

    # ---- clustering (single indicator, no rho) ---------------------------

    def update_indicators(self):
        cl = self.state.cluster
        logpi = np.log(np.maximum(cocluster.stick_weights(cl.V_beta), 1e-300))
        for k in range(self.K):
            for j in range(self.J):
                r = self._residual_excluding(k, j)
                fits = self.B[j] @ cl.beta_atoms.T    # n x C
                logp = logpi - 0.5 * np.sum((r[:, None] - fits) ** 2,
                                            axis=0) / self.state.sigma2[k]
                if not np.all(np.isfinite(logp)):
                    raise FloatingPointError(
                        "non-finite log-likelihood in indicator update")
                logp -= logp.max()
                prob = np.exp(logp)
                c = int(self.rng.choice(self.C, p=prob / prob.sum()))
                cl.Z_beta[k, j] = c
                cl.Z_theta[k, j] = c   # mirrored for uniform reporting

    def update_sticks(self):
        acc = cocluster.update_stick_weights(self.state.cluster, self.hyper,
                                             "beta", self.rng,
                                             method=self.v_update_method)
        self.accept_counts["sticks"] += acc
        self.accept_counts["sticks_total"] += self.C - 1

    def _update_concentration(self):
        cl = self.state.cluster
        clamped = np.minimum(cl.V_beta[:-1], V_CLAMP)
        rate = self.hyper.b_beta - np.sum(np.log1p(-clamped))
        cl.alpha_beta = self.rng.gamma(self.hyper.a_beta + self.C - 1,
                                       1.0 / rate)

    # ---- penalty scale ---------------------------------------------------

    def update_lambda_beta(self):
        st = self.state
        h = self.hyper
        quad = float(np.einsum("cd,de,ce->", st.cluster.beta_atoms,
                               self.Sigma0, st.cluster.beta_atoms))
        shape = h.a_lambda_beta + 0.5 * self.C * self.P_rank
        rate = h.b_lambda_beta + 0.5 * quad
        st.lambda_beta = self.rng.gamma(shape, 1.0 / rate)

    # ---- disabled theta machinery -----------------------------------------

    def update_theta_atoms(self):
        raise RuntimeError("the nonseparable chain has no theta updates")

    def update_theta_atom_polar(self, c: int):
        raise RuntimeError("the nonseparable chain has no theta updates")

    def update_theta_atom_fb(self, c: int):
        raise RuntimeError("the nonseparable chain has no theta updates")

    def update_lambda_theta(self):
        raise RuntimeError("the nonseparable chain has no theta updates")

    # ---- the sweep --------------------------------------------------------

    def sweep(self):
        fl = self.flags
        if fl.indicators:
            self.update_indicators()
        if fl.sticks:
            self.update_sticks()
        if fl.beta_atoms:
            self.update_beta_atoms()
        if fl.concentrations:
            self._update_concentration()
        if fl.lambda_beta:
            self.update_lambda_beta()
        if fl.random_effects:
            self.update_random_effects()
        if fl.xi:
            self.update_xi()
        for k in range(self.K):
            if fl.sigma2:
                self.update_sigma2(k)
            if fl.fixed_effects:
                self.update_fixed_effects(k)


def run_nonseparable_chain(spec: ModelSpec, data: Dataset, n_iter: int,
                           burn_in: int = 0, thin: int = 1, seed=0,
                           **kwargs) -> ChainOutput:
    """Convenience driver for one tensor-variant chain."""
    sampler = NonseparableSampler(spec, data, seed=seed, **kwargs)
    return sampler.run(n_iter, burn_in=burn_in, thin=thin)

"""Truncated stick-breaking machinery for the coupled clustering prior:
joint indicator pmf, indicator Gibbs updates, and MH/grid updates for the
stick weights, concentrations, and the dependence parameter rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import HyperParams

V_CLAMP = 1.0 - 1e-12


@dataclass
class ClusterState:
    """Mutable clustering state owned by a single chain.

    Indicator tables are 0-based; stick weight vectors end in exactly 1.
    Atom arrays are stored row-per-cluster.
    """

    Z_beta: np.ndarray      # K x J ints in 0..C-1
    Z_theta: np.ndarray     # K x J ints in 0..C-1
    V_beta: np.ndarray      # length C, last entry 1
    V_theta: np.ndarray     # length C, last entry 1
    alpha_beta: float
    alpha_theta: float
    rho: float
    beta_atoms: np.ndarray   # C x d'
    theta_atoms: np.ndarray  # C x m

    @property
    def truncation(self) -> int:
        return self.V_beta.size

    def validate(self):
        C = self.truncation
        if self.V_beta[-1] != 1.0 or self.V_theta[-1] != 1.0:
            raise ValueError("last stick weight must be 1")
        for Z in (self.Z_beta, self.Z_theta):
            if Z.min() < 0 or Z.max() >= C:
                raise ValueError("indicator out of range")
        norms = np.linalg.norm(self.theta_atoms, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise ValueError("theta atoms must be unit vectors")


def initial_cluster_state(C: int, K: int, J: int, d: int, m: int,
                          rng: np.random.Generator,
                          hyper: HyperParams | None = None) -> ClusterState:
    """Draw an initial state from the prior (unit-information defaults when
    hyper is None). Theta atoms start uniform on the positive-last-coordinate
    half sphere.
    """
    hyper = hyper or HyperParams()
    alpha_b = rng.gamma(hyper.a_beta, 1.0 / hyper.b_beta)
    alpha_t = rng.gamma(hyper.a_theta, 1.0 / hyper.b_theta)
    rho = rng.gamma(hyper.a_rho, 1.0 / hyper.b_rho)
    V_b = np.append(np.minimum(rng.beta(1.0, alpha_b, size=C - 1), V_CLAMP), 1.0)
    V_t = np.append(np.minimum(rng.beta(1.0, alpha_t, size=C - 1), V_CLAMP), 1.0)
    pmf = joint_indicator_pmf(stick_weights(V_b), stick_weights(V_t), rho)
    flat = rng.choice(C * C, size=K * J, p=pmf.ravel())
    Z_b, Z_t = np.divmod(flat, C)
    thetas = rng.standard_normal((C, m))
    thetas /= np.linalg.norm(thetas, axis=1, keepdims=True)
    thetas[thetas[:, -1] < 0] *= -1.0
    return ClusterState(
        Z_beta=Z_b.reshape(K, J), Z_theta=Z_t.reshape(K, J),
        V_beta=V_b, V_theta=V_t,
        alpha_beta=alpha_b, alpha_theta=alpha_t, rho=rho,
        beta_atoms=np.zeros((C, d)), theta_atoms=thetas)


def stick_weights(V: np.ndarray) -> np.ndarray:
    """Weights pi_c = V_c * prod_{j<c} (1 - V_j); sums to 1 when the last
    entry of V is 1.
    """
    V = np.asarray(V, dtype=float)
    if V[-1] != 1.0:
        raise ValueError("last stick weight must be 1")
    tail = np.concatenate(([1.0], np.cumprod(1.0 - V[:-1])))
    return V * tail


def joint_indicator_pmf(pi_beta: np.ndarray, pi_theta: np.ndarray,
                        rho: float) -> np.ndarray:
    """Normalized C x C table proportional to (1+rho)^{1(a=b)} pi^b_a pi^t_b.

    rho = 0 gives the independent product; rho -> inf concentrates all mass
    on the diagonal.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    table = np.outer(pi_beta, pi_theta)
    table[np.diag_indices_from(table)] *= 1.0 + rho
    return table / table.sum()


def cluster_counts(Z: np.ndarray, C: int) -> np.ndarray:
    return np.bincount(Z.ravel(), minlength=C)


def _log_pmf_table(V_beta, V_theta, rho):
    pi_b = stick_weights(V_beta)
    pi_t = stick_weights(V_theta)
    # floor avoids -inf from zero-probability cells without errstate cost
    return np.log(np.maximum(joint_indicator_pmf(pi_b, pi_t, rho), 1e-300))


def indicator_log_prior(state: ClusterState) -> float:
    """Log of prod_{k,j} pi*_{Z^b_kj, Z^t_kj} at the current sticks/rho."""
    table = _log_pmf_table(state.V_beta, state.V_theta, state.rho)
    return float(table[state.Z_beta, state.Z_theta].sum())


def gibbs_update_indicators(state: ClusterState, loglik_fn,
                            rng: np.random.Generator) -> None:
    """One full scan of the indicator tables in row-major (k outer) order.

    loglik_fn(k, j, c, which) must return the log-likelihood of the data
    for pair (k, j) with atom c substituted, all else held fixed; which is
    "beta" or "theta". Categorical draws use log-sum-exp normalization.
    """
    C = state.truncation
    log_pmf = _log_pmf_table(state.V_beta, state.V_theta, state.rho)
    K, J = state.Z_beta.shape
    for k in range(K):
        for j in range(J):
            for which, Z, other in (("beta", state.Z_beta, state.Z_theta),
                                    ("theta", state.Z_theta, state.Z_beta)):
                logp = np.array([loglik_fn(k, j, c, which) for c in range(C)])
                if not np.all(np.isfinite(logp)):
                    raise FloatingPointError("non-finite log-likelihood in indicator update")
                if which == "beta":
                    logp = logp + log_pmf[:, other[k, j]]
                else:
                    logp = logp + log_pmf[other[k, j], :]
                logp -= logp.max()
                prob = np.exp(logp)
                Z[k, j] = rng.choice(C, p=prob / prob.sum())


def _log_beta_pdf(x, a, b):
    if x <= 0.0 or x >= 1.0:
        return -np.inf
    return (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
            + (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x))


def update_stick_weights(state: ClusterState, hyper: HyperParams, which: str,
                         rng: np.random.Generator, method: str = "mh") -> int:
    """Update the free sticks V_c, c < C, for one side of the prior.

    method "mh" proposes from the conjugate posterior under independent
    clustering, Beta(1 + n_c, alpha + sum_{c'>c} n_c'), so the acceptance
    ratio is identically 1 at rho = 0. method "grid" samples the full
    conditional on a midpoint grid of hyper.gridsize nodes. Returns the
    number of accepted moves.
    """
    C = state.truncation
    V = state.V_beta if which == "beta" else state.V_theta
    Z = state.Z_beta if which == "beta" else state.Z_theta
    alpha = state.alpha_beta if which == "beta" else state.alpha_theta
    counts = cluster_counts(Z, C)
    tail_counts = np.concatenate((np.cumsum(counts[::-1])[::-1][1:], [0.0]))
    accepted = 0

    def log_target(v_c, c):
        old = V[c]
        V[c] = v_c
        val = (alpha - 1.0) * math.log1p(-min(v_c, V_CLAMP)) + indicator_log_prior(state)
        V[c] = old
        return val

    for c in range(C - 1):
        a_prop = 1.0 + counts[c]
        b_prop = alpha + tail_counts[c]
        if method == "grid":
            nodes = (np.arange(hyper.gridsize) + 0.5) / hyper.gridsize
            logp = np.array([log_target(v, c) for v in nodes])
            logp -= logp.max()
            prob = np.exp(logp)
            V[c] = float(rng.choice(nodes, p=prob / prob.sum()))
            accepted += 1
            continue
        proposal = float(rng.beta(a_prop, b_prop))
        # beta draws can round to the boundary when b_prop is tiny; the
        # density there is undefined, so treat those proposals as rejected
        if not 0.0 < proposal < 1.0:
            continue
        log_ratio = (log_target(proposal, c) - log_target(V[c], c)
                     - _log_beta_pdf(proposal, a_prop, b_prop)
                     + _log_beta_pdf(V[c], a_prop, b_prop))
        if math.log(rng.uniform()) < log_ratio:
            V[c] = proposal
            accepted += 1
    return accepted


def update_concentrations(state: ClusterState, hyper: HyperParams,
                          rng: np.random.Generator) -> None:
    """Exact Gamma full conditionals for both concentration parameters:
    alpha ~ Gamma(a + C - 1, b - sum_{c<C} log(1 - V_c)), shape/rate.
    """
    C = state.truncation
    for which in ("beta", "theta"):
        V = state.V_beta if which == "beta" else state.V_theta
        a0 = hyper.a_beta if which == "beta" else hyper.a_theta
        b0 = hyper.b_beta if which == "beta" else hyper.b_theta
        clamped = np.minimum(V[:-1], V_CLAMP)
        rate = b0 - np.sum(np.log1p(-clamped))
        draw = rng.gamma(a0 + C - 1, 1.0 / rate)
        if which == "beta":
            state.alpha_beta = draw
        else:
            state.alpha_theta = draw


def update_rho(state: ClusterState, hyper: HyperParams,
               rng: np.random.Generator) -> bool:
    """Random-walk MH on log rho; the target includes the Gamma prior, the
    indicator prior product, and the rho Jacobian of the log transform.
    """

    def log_target(rho):
        old = state.rho
        state.rho = rho
        val = ((hyper.a_rho - 1.0) * math.log(rho) - hyper.b_rho * rho
               + indicator_log_prior(state) + math.log(rho))
        state.rho = old
        return val

    proposal = state.rho * math.exp(hyper.rw_sd * rng.standard_normal())
    if math.log(rng.uniform()) < log_target(proposal) - log_target(state.rho):
        state.rho = proposal
        return True
    return False

"""Structural model definitions: specs for the DLNM / index-model variants,
hyperparameter defaults, dataset container, and per-index input construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .splines import SplineConfig

MODEL_KINDS = ("dlnm", "mim", "additive", "biomarker", "nonseparable_dlnm")
THETA_METHODS = ("polar", "fisher_bingham_projection")


@dataclass(frozen=True)
class HyperParams:
    """Prior hyperparameters and MH tuning constants.

    Defaults: every gamma pair is (1, 1) except the lag-smoothness rate
    b_lambda_theta = 0.001, and the inverse-gamma pairs for xi and sigma
    are (0.01, 0.01). rw_sd is the random-walk SD on the log scale.
    """

    a_beta: float = 1.0
    b_beta: float = 1.0
    a_theta: float = 1.0
    b_theta: float = 1.0
    a_rho: float = 1.0
    b_rho: float = 1.0
    a_lambda_beta: float = 1.0
    b_lambda_beta: float = 1.0
    a_lambda_theta: float = 1.0
    b_lambda_theta: float = 0.001
    a_xi: float = 0.01
    b_xi: float = 0.01
    a_sigma: float = 0.01
    b_sigma: float = 0.01
    tau_theta: float = 0.0
    rw_sd: float = 1.0
    gridsize: int = 10

    def __post_init__(self):
        for name in ("a_beta", "b_beta", "a_theta", "b_theta", "a_rho", "b_rho",
                     "a_lambda_beta", "b_lambda_beta", "a_lambda_theta",
                     "b_lambda_theta", "a_xi", "b_xi", "a_sigma", "b_sigma",
                     "rw_sd"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gridsize < 2:
            raise ValueError("gridsize must be at least 2")


@dataclass(frozen=True)
class ModelSpec:
    """Full specification of one model fit.

    index_designs holds the J analyst-chosen matrices A_j (each r x M);
    reduction_basis is the r x m orthonormal-column matrix applied to every
    A_j x*_i, or None for the identity. spline_config may be None at build
    time and filled in from data (the knot range depends on the reachable
    index values).
    """

    n_outcomes: int
    n_indices: int
    exposure_dim: int
    index_designs: tuple
    reduction_basis: np.ndarray | None
    spline_config: SplineConfig | None
    truncation: int
    hyper: HyperParams = field(default_factory=HyperParams)
    theta_update_method: str = "auto"
    orthogonalize_random_effects: bool = False
    model_kind: str = "dlnm"
    diff_order: int = 2

    def __post_init__(self):
        if self.n_outcomes < 1 or self.n_indices < 1 or self.exposure_dim < 1:
            raise ValueError("counts must be positive")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model_kind {self.model_kind!r}")
        if self.theta_update_method not in THETA_METHODS and \
                self.theta_update_method != "auto":
            raise ValueError(f"unknown theta_update_method {self.theta_update_method!r}")
        if len(self.index_designs) != self.n_indices:
            raise ValueError("need one design matrix per index")
        r = self.index_designs[0].shape[0]
        for A in self.index_designs:
            if A.shape != (r, self.exposure_dim):
                raise ValueError("every A_j must be r x M with a common r")
        if self.reduction_basis is not None:
            psi = self.reduction_basis
            if psi.shape[0] != r:
                raise ValueError("reduction basis rows must match A_j rows")
            gram = psi.T @ psi
            if np.max(np.abs(gram - np.eye(psi.shape[1]))) > 1e-10:
                raise ValueError("reduction basis columns must be orthonormal")
        if self.truncation < 1:
            raise ValueError("truncation must be at least 1")
        if self.theta_update_method == "auto":
            # per-angle random-walk updates mix slowly in high dimension
            method = "fisher_bingham_projection" if self.index_dim >= 8 else "polar"
            object.__setattr__(self, "theta_update_method", method)
        if self.theta_update_method == "polar" and self.hyper.tau_theta != 0.0:
            raise ValueError("polar updates require tau_theta = 0")

    @property
    def index_rows(self) -> int:
        """Number of rows r of each A_j."""
        return self.index_designs[0].shape[0]

    @property
    def index_dim(self) -> int:
        """Dimension m of the reduced index-weight vectors."""
        if self.reduction_basis is None:
            return self.index_rows
        return self.reduction_basis.shape[1]


@dataclass(frozen=True)
class Dataset:
    """Observed data: outcomes Y (n x K), stacked exposures Xstar (n x M),
    optional covariates Z (n x q). Standardization is the caller's job;
    missing values are rejected outright.
    """

    Y: np.ndarray
    Xstar: np.ndarray
    Z: np.ndarray | None = None
    outcome_names: tuple = ()
    exposure_names: tuple = ()
    covariate_names: tuple = ()

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        X = np.asarray(self.Xstar, dtype=float)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "Xstar", X)
        if Y.ndim != 2 or X.ndim != 2:
            raise ValueError("Y and Xstar must be 2-d")
        n = Y.shape[0]
        if n < 2:
            raise ValueError("need at least 2 observations")
        if X.shape[0] != n:
            raise ValueError("Y and Xstar must share rows")
        if self.Z is not None:
            Z = np.asarray(self.Z, dtype=float)
            if Z.size == 0:
                Z = None
            elif Z.shape[0] != n:
                raise ValueError("Z must share rows with Y")
            object.__setattr__(self, "Z", Z)
        for label, arr in (("Y", Y), ("Xstar", X), ("Z", self.Z)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValueError(f"{label} contains missing or non-finite values")

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def n_covariates(self) -> int:
        return 0 if self.Z is None else self.Z.shape[1]


def natural_cubic_lag_basis(L: int, m: int) -> np.ndarray:
    """Orthonormal L x m lag-reduction basis from a natural cubic spline
    family over lag indices 1..L, orthonormalized by QR.
    """
    if m > L:
        raise ValueError("reduction dimension cannot exceed the lag count")
    lags = np.arange(1.0, L + 1.0)
    if m == 1:
        cols = [np.ones(L)]
    else:
        # natural cubic spline basis: 1, t, and truncated-cubic terms with
        # the linear-tail correction, knots equally spaced over the lags
        knots = np.linspace(lags[0], lags[-1], m)

        def d(j):
            num = np.maximum(lags - knots[j], 0.0) ** 3 - np.maximum(lags - knots[-1], 0.0) ** 3
            return num / (knots[-1] - knots[j])

        cols = [np.ones(L), lags]
        for j in range(m - 2):
            cols.append(d(j) - d(m - 2))
    basis = np.column_stack(cols)
    q, _ = np.linalg.qr(basis)
    # fix QR sign ambiguity for determinism
    signs = np.sign(q[0, :])
    signs[signs == 0] = 1.0
    return q * signs


def build_dlnm_spec(P: int, L: int, m: int | None = None, K: int = 1,
                    C: int | None = None, model_kind: str = "dlnm",
                    **kwargs) -> ModelSpec:
    """DLNM spec: one index per exposure, A_j the L-row block selector into
    the stacked n x (P*L) exposure matrix, optional lag-dimension reduction.
    """
    if L < 2:
        raise ValueError("DLNM requires at least 2 lags")
    if m is not None and m > L:
        raise ValueError("reduction dimension cannot exceed the lag count")
    designs = []
    for j in range(P):
        A = np.zeros((L, P * L))
        A[:, j * L:(j + 1) * L] = np.eye(L)
        designs.append(A)
    psi = None if m is None else natural_cubic_lag_basis(L, m)
    return ModelSpec(
        n_outcomes=K, n_indices=P, exposure_dim=P * L,
        index_designs=tuple(designs), reduction_basis=psi,
        spline_config=kwargs.pop("spline_config", None),
        truncation=C if C is not None else K * P,
        model_kind=model_kind, **kwargs)


def build_mim_spec(P: int, J: int, K: int = 1, C: int | None = None,
                   **kwargs) -> ModelSpec:
    """Adaptive multiple index model of maximum order J: every A_j is the
    P x P identity, so indices differ only through their weights.
    """
    if P < 2:
        raise ValueError("an index model needs at least 2 exposures")
    if J < 1:
        raise ValueError("need at least one index")
    designs = tuple(np.eye(P) for _ in range(J))
    return ModelSpec(
        n_outcomes=K, n_indices=J, exposure_dim=P,
        index_designs=designs, reduction_basis=None,
        spline_config=kwargs.pop("spline_config", None),
        truncation=C if C is not None else K * J,
        model_kind="mim", **kwargs)


def build_additive_spec(P: int, K: int = 1, C: int | None = None,
                        **kwargs) -> ModelSpec:
    """Additive model: A_j is the unit row selecting exposure j, the scalar
    weight is fixed at 1, and the theta machinery is disabled.
    """
    designs = tuple(np.eye(P)[j:j + 1, :] for j in range(P))
    return ModelSpec(
        n_outcomes=K, n_indices=P, exposure_dim=P,
        index_designs=designs, reduction_basis=None,
        spline_config=kwargs.pop("spline_config", None),
        truncation=C if C is not None else K * P,
        model_kind="additive", **kwargs)


def compute_index_inputs(spec: ModelSpec, Xstar: np.ndarray) -> np.ndarray:
    """The reduced per-index inputs x~_ij = Psi' A_j x*_i as an n x J x m
    tensor; A_j and Psi are fixed for the whole chain, so this is computed
    once and cached by the sampler.
    """
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim != 2 or Xstar.shape[1] != spec.exposure_dim:
        raise ValueError("exposure matrix has the wrong number of columns")
    maps = []
    for A in spec.index_designs:
        maps.append(A if spec.reduction_basis is None else spec.reduction_basis.T @ A)
    stacked = np.stack(maps)  # J x m x M
    return np.einsum("jml,il->ijm", stacked, Xstar)


def index_value_bound(spec: ModelSpec, Xstar: np.ndarray) -> float:
    """Cauchy-Schwarz bound R on any unit-weight index value: the largest
    row norm of the reduced inputs. Every reachable x~'theta lies in
    [-R, R] for the whole chain.
    """
    xt = compute_index_inputs(spec, Xstar)
    return float(np.max(np.linalg.norm(xt, axis=2)))


def finalize_spec(spec: ModelSpec, Xstar: np.ndarray,
                  n_basis: int = 8, degree: int = 3) -> ModelSpec:
    """Fill in the spline configuration from data when absent: equally
    spaced knots on [-R, R] with R the index-value bound.
    """
    if spec.spline_config is not None:
        return spec
    R = index_value_bound(spec, Xstar)
    pad = 1e-8 * max(R, 1.0)  # guard against zero-width range
    cfg = SplineConfig(degree=degree, n_basis=n_basis, knot_range=(-R - pad, R + pad))
    return replace(spec, spline_config=cfg)

"""B-spline bases with centering constraints, roughness penalties, and
finite-difference smoothness matrices.

All exposure-response curves in the sampler share a single basis (the
cluster atoms are shared across exposure-outcome pairs), so the basis is
built once over a fixed range and reused for the whole chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline, splev
from scipy.linalg import null_space


@dataclass(frozen=True)
class SplineConfig:
    """Configuration of the curve basis (pre-centering)."""

    degree: int = 3
    n_basis: int = 8
    knot_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        lo, hi = self.knot_range
        if not lo < hi:
            raise ValueError(f"knot_range must satisfy lo < hi, got {self.knot_range}")
        if self.n_basis < self.degree + 1:
            raise ValueError(
                f"n_basis must be >= degree + 1 ({self.degree + 1}), got {self.n_basis}"
            )

    @cached_property
    def knots(self) -> np.ndarray:
        """Clamped knot vector with equally spaced interior knots."""
        lo, hi = self.knot_range
        k = self.degree
        n_interior = self.n_basis - k - 1
        interior = np.linspace(lo, hi, n_interior + 2)[1:-1]
        return np.concatenate([np.full(k + 1, lo), interior, np.full(k + 1, hi)])

    @cached_property
    def _inv_knot_gaps(self) -> dict:
        """1 / (t[i+r+1] - t[i+r+1-d]) tabulated over the support intervals,
        with zero-width gaps mapped to 0; keyed (d, r) for the de Boor loop.
        """
        t = self.knots
        k = self.degree
        intervals = np.arange(k, self.n_basis)
        table = {}
        for d in range(1, k + 1):
            for r in range(d):
                gaps = t[intervals + r + 1] - t[intervals + r + 1 - d]
                inv = np.where(gaps > 0, 1.0 / np.where(gaps > 0, gaps, 1.0), 0.0)
                table[(d, r)] = inv
        return table


def _deboor_nonzero(cfg: SplineConfig, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values of the degree+1 basis functions that are nonzero at each point.

    Returns (N, i): N[p, r] is basis function i[p]-degree+r evaluated at
    u[p]. Vectorized Cox-de Boor over the points; inputs are clamped to the
    knot range first.
    """
    t = cfg.knots
    k = cfg.degree
    lo, hi = cfg.knot_range
    u = np.clip(np.asarray(u, dtype=float), lo, hi)
    i = np.clip(np.searchsorted(t, u, side="right") - 1, k, cfg.n_basis - 1)
    # one gather of the knot window t[i+1-k .. i+k] per point
    tw = t[i[:, None] + np.arange(1 - k, k + 1)[None, :]]

    def knot(offset):
        return tw[:, offset + k - 1]

    inv_gaps = cfg._inv_knot_gaps
    base = i - k
    N = np.zeros((u.size, k + 1))
    N[:, 0] = 1.0
    for d in range(1, k + 1):
        saved = np.zeros(u.size)
        for r in range(d):
            tr = knot(r + 1)
            tl = knot(r + 1 - d)
            term = N[:, r] * inv_gaps[(d, r)][base]
            N[:, r] = saved + (tr - u) * term
            saved = (u - tl) * term
        N[:, d] = saved
    return N, i


def bspline_design(cfg: SplineConfig, u: np.ndarray) -> np.ndarray:
    """Evaluate the (uncentered) B-spline design matrix at points ``u``.

    Points outside the knot range are clamped to the boundary; rows sum
    to one (partition of unity).
    """
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("empty evaluation points")
    N, i = _deboor_nonzero(cfg, u)
    k = cfg.degree
    out = np.zeros((u.size, cfg.n_basis))
    rows = np.arange(u.size)
    for r in range(k + 1):
        out[rows, i - k + r] = N[:, r]
    return out


def bspline_function_values(cfg: SplineConfig, u: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """sum_l coef_l b_l(u) without materializing the design matrix."""
    N, i = _deboor_nonzero(cfg, u)
    k = cfg.degree
    out = np.zeros(u.size if np.ndim(u) else 1)
    for r in range(k + 1):
        out += N[:, r] * coef[i - k + r]
    return out


def bspline_derivative_design(cfg: SplineConfig, u: np.ndarray, order: int = 1) -> np.ndarray:
    """Evaluate derivatives of each basis function at points ``u``."""
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("empty evaluation points")
    if order > cfg.degree:
        return np.zeros((u.size, cfg.n_basis))
    lo, hi = cfg.knot_range
    u = np.clip(u, lo, hi)
    t = cfg.knots
    out = np.empty((u.size, cfg.n_basis))
    coef = np.zeros(cfg.n_basis)
    for ell in range(cfg.n_basis):
        coef[ell] = 1.0
        out[:, ell] = splev(u, (t, coef.copy(), cfg.degree), der=order)
        coef[ell] = 0.0
    return out


def apply_centering(design: np.ndarray, reference_design: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Center a design so its columns average to zero over the reference rows.

    Returns the centered design (one fewer column) and the transform ``T``
    with ``centered = design @ T``; ``T`` has orthonormal columns spanning
    the null space of the column-mean row. When ``reference_design`` is
    given the constraint is computed from its rows instead, so the same
    transform can be reused on new evaluation points.
    """
    design = np.asarray(design, dtype=float)
    reference = design if reference_design is None else np.asarray(reference_design, dtype=float)
    if reference.shape[0] == 0:
        raise ValueError("empty reference design")
    d = design.shape[1]
    if np.linalg.matrix_rank(reference) < min(reference.shape):
        raise ValueError("degenerate design: rank below number of columns")
    mean_row = reference.mean(axis=0, keepdims=True)
    T = null_space(mean_row)
    if T.shape[1] != d - 1:
        raise ValueError("centering constraint removed more than one dimension")
    return design @ T, T


def second_derivative_penalty(cfg: SplineConfig) -> np.ndarray:
    """Integrated squared-second-derivative penalty of the uncentered basis.

    Gauss-Legendre quadrature per knot interval, exact for the piecewise
    polynomial integrand.
    """
    if cfg.degree < 2:
        raise ValueError("second-derivative penalty requires degree >= 2")
    t = cfg.knots
    breaks = np.unique(t)
    # product of two degree-(k-2) pieces: polynomial degree 2k-4
    n_nodes = max(cfg.degree - 1, 1)
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    S = np.zeros((cfg.n_basis, cfg.n_basis))
    for a, b in zip(breaks[:-1], breaks[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        x = mid + half * nodes
        D2 = bspline_derivative_design(cfg, x, order=2)
        S += half * (D2.T * weights) @ D2
    return 0.5 * (S + S.T)


def difference_matrix(L: int, s: int) -> np.ndarray:
    """Finite-difference matrix of order ``s``, shape (L-s, L)."""
    if not 1 <= s < L:
        raise ValueError(f"difference order must satisfy 1 <= s < L, got s={s}, L={L}")
    D = np.eye(L)
    for _ in range(s):
        D = np.diff(D, axis=0)
    return D


def lag_precision(L: int, s: int, Psi: np.ndarray | None = None) -> np.ndarray:
    """Smoothness penalty for lag-weight vectors: Psi' D_s' D_s Psi."""
    D = difference_matrix(L, s)
    if Psi is None:
        M = D.T @ D
    else:
        Psi = np.asarray(Psi, dtype=float)
        if Psi.shape[0] != L:
            raise ValueError(f"reduction basis has {Psi.shape[0]} rows, expected {L}")
        DP = D @ Psi
        M = DP.T @ DP
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class CenteredBasis:
    """A centered B-spline basis shared by all curve atoms in a chain.

    ``transform`` maps uncentered coefficients to the constrained space;
    ``penalty`` is the centered roughness penalty and ``penalty_reg`` its
    full-rank regularization used as the prior precision shape.
    """

    cfg: SplineConfig
    transform: np.ndarray
    penalty: np.ndarray
    ridge_eps: float = 1e-6
    penalty_reg: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        reg = self.penalty + self.ridge_eps * np.eye(self.penalty.shape[0])
        object.__setattr__(self, "penalty_reg", 0.5 * (reg + reg.T))

    @property
    def n_coef(self) -> int:
        return self.transform.shape[1]

    def design(self, u: np.ndarray) -> np.ndarray:
        return bspline_design(self.cfg, u) @ self.transform

    def derivative_design(self, u: np.ndarray) -> np.ndarray:
        return bspline_derivative_design(self.cfg, u) @ self.transform

    def f_eval(self, u: np.ndarray, coef: np.ndarray) -> np.ndarray:
        """Spline values design(u) @ coef without forming the design."""
        return bspline_function_values(self.cfg, u, self.transform @ coef)

    def to_jsonable(self) -> dict:
        return {
            "degree": self.cfg.degree,
            "n_basis": self.cfg.n_basis,
            "knot_range": list(self.cfg.knot_range),
            "transform": self.transform.tolist(),
            "penalty": self.penalty.tolist(),
            "ridge_eps": self.ridge_eps,
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "CenteredBasis":
        cfg = SplineConfig(d["degree"], d["n_basis"], tuple(d["knot_range"]))
        return cls(cfg, np.asarray(d["transform"]), np.asarray(d["penalty"]), d["ridge_eps"])


def make_centered_basis(cfg: SplineConfig, n_reference: int = 201, ridge_eps: float = 1e-6) -> CenteredBasis:
    """Build the chain-wide centered basis.

    The centering reference is a uniform grid over the knot range: index
    values move every sweep, so the constraint is anchored to the basis
    domain rather than to any one draw's index values.
    """
    grid = np.linspace(*cfg.knot_range, n_reference)
    raw = bspline_design(cfg, grid)
    _, T = apply_centering(raw)
    S = second_derivative_penalty(cfg)
    return CenteredBasis(cfg, T, T.T @ S @ T, ridge_eps)

"""Unit-sphere utilities: polar-coordinate parameterization, exact sampling
from quadratic exponential-family (Bingham-type) distributions, and a
saddlepoint approximation to their normalizing constant.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

HALF_PI = 0.5 * np.pi


def angles_to_unit_vector(phi: np.ndarray) -> np.ndarray:
    """Map m-1 angles in [-pi/2, pi/2] to a unit m-vector.

    Coordinates follow the sine/cosine cascade; the last coordinate is a
    product of cosines and is therefore nonnegative.
    """
    phi = np.asarray(phi, dtype=float)
    m = phi.size + 1
    theta = np.empty(m)
    cum = 1.0
    for ell in range(m - 1):
        theta[ell] = math.sin(phi[ell]) * cum
        cum *= math.cos(phi[ell])
    theta[m - 1] = cum
    return theta


def unit_vector_to_angles(theta: np.ndarray) -> np.ndarray:
    """Inverse of :func:`angles_to_unit_vector`; requires theta[-1] >= 0."""
    theta = np.asarray(theta, dtype=float)
    if theta[-1] < -1e-12:
        raise ValueError("angle extraction requires a nonnegative last coordinate")
    m = theta.size
    phi = np.empty(m - 1)
    cum = 1.0
    for ell in range(m - 1):
        if cum <= 1e-300:
            phi[ell:] = 0.0
            break
        s = np.clip(theta[ell] / cum, -1.0, 1.0)
        phi[ell] = math.asin(s)
        cum *= math.cos(phi[ell])
    return phi


def angle_log_jacobian(phi: np.ndarray) -> float:
    """Log surface-measure Jacobian of the cascade: sum_l (m-1-l) log cos(phi_l)
    with l counted from 1.
    """
    phi = np.asarray(phi, dtype=float)
    m = phi.size + 1
    powers = m - 2 - np.arange(phi.size)  # m-1-l for l = 1..m-1
    c = np.abs(np.cos(phi))
    return float(np.sum(powers * np.log(np.maximum(c, 1e-300))))


def log_sphere_area(m: int) -> float:
    """Log surface area of the unit sphere in R^m."""
    return math.log(2.0) + 0.5 * m * math.log(math.pi) - math.lgamma(0.5 * m)


def _squared_radius_log_density(b: np.ndarray) -> float:
    """Log density at 1 of sum_i chi2_1 / (2*b_i), by saddlepoint contour
    integration.

    The inversion integral is taken along the vertical line through the
    saddle point t_hat of the cumulant generating function
    K(t) = -0.5 * sum log(1 - t/b_i), which keeps the integrand free of
    cancellation; the oscillatory factor exp(-iy) is handled by Fourier
    quadrature.
    """
    bmin = b.min()
    m = b.size

    def kprime_minus_one(t):
        return 0.5 * np.sum(1.0 / (b - t)) - 1.0

    hi = bmin - 1e-12
    lo = bmin - 0.5 * m  # K'(t) <= 0.5*m/(bmin - t) < 1 here
    t_hat = brentq(kprime_minus_one, lo, hi, xtol=1e-14, rtol=1e-14)

    def amplitude(y):
        z = t_hat + 1j * y
        return np.exp(-0.5 * np.sum(np.log1p(-z / b)) - t_hat)

    cos_part, _ = quad(lambda y: amplitude(y).real, 0.0, np.inf,
                       weight="cos", wvar=1.0, limit=200)
    sin_part, _ = quad(lambda y: amplitude(y).imag, 0.0, np.inf,
                       weight="sin", wvar=1.0, limit=200)
    return math.log((cos_part + sin_part) / math.pi)


def bingham_log_norm_const(A: np.ndarray) -> float:
    """Saddlepoint evaluation of log of int_{S^{m-1}} exp(-x'Ax) dx.

    Uses the chi-square mixture representation of the squared radius of an
    independent Gaussian vector; its density at 1 is recovered by numerical
    steepest descent through the saddle point. ``A`` must be symmetric; it
    is shifted so all working eigenvalues are strictly positive, which is
    exact because adding c*I multiplies the integral by exp(-c).
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    eigs = np.linalg.eigvalsh(0.5 * (A + A.T))
    if np.max(np.abs(eigs)) < 1e-12:
        return log_sphere_area(m)
    shift = 1.0 - eigs.min()
    b = eigs + shift  # all >= 1
    log_c = (
        math.log(2.0)
        + 0.5 * m * math.log(math.pi)
        - 0.5 * np.sum(np.log(b))
        + _squared_radius_log_density(b)
        + shift
    )
    return float(log_c)


def bingham_log_norm_interp(penalty: np.ndarray, lo: float = 1e-5, hi: float = 1e7,
                            n: int = 160):
    """Build a fast evaluator of lam -> bingham_log_norm_const(0.5*lam*penalty).

    The constant is needed at every precision update for the same penalty
    matrix, so we tabulate log C over a log-spaced grid of lam and return a
    cubic-spline interpolant in log lam; values outside [lo, hi] fall back
    to the direct computation.
    """
    penalty = np.asarray(penalty, dtype=float)
    m = penalty.shape[0]
    eigs = np.linalg.eigvalsh(0.5 * (penalty + penalty.T))
    if eigs.max() < 1e-12:
        area = log_sphere_area(m)
        return lambda lam: area

    def direct(lam):
        lam_eigs = 0.5 * lam * eigs
        shift = 1.0 - lam_eigs.min()
        b = lam_eigs + shift
        return (math.log(2.0) + 0.5 * m * math.log(math.pi)
                - 0.5 * np.sum(np.log(b))
                + _squared_radius_log_density(b) + shift)

    grid = np.geomspace(lo, hi, n)
    values = np.array([direct(lam) for lam in grid])
    spline = CubicSpline(np.log(grid), values)

    def evaluate(lam: float) -> float:
        if lam < lo or lam > hi:
            return float(direct(lam))
        return float(spline(math.log(lam)))

    return evaluate


def sample_bingham(A: np.ndarray, rng: np.random.Generator, half_sphere: bool = False) -> np.ndarray:
    """Exact rejection sampling from the density proportional to exp(-x'Ax)
    on the unit sphere, via an angular-central-Gaussian envelope.

    With ``half_sphere`` the draw is reflected so the last coordinate is
    nonnegative (valid by antipodal symmetry of the density).
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    eigs, Q = np.linalg.eigh(0.5 * (A + A.T))
    lam = eigs - eigs.min()  # exp(-c) constant factored out
    if lam.max() < 1e-12:
        x = rng.standard_normal(m)
        x /= np.linalg.norm(x)
    else:
        # b solves sum 1/(b + 2*lam_i) = 1
        def fn(bv):
            return np.sum(1.0 / (bv + 2.0 * lam)) - 1.0

        b = brentq(fn, 1e-10, float(m) + 1e-10, xtol=1e-12)
        omega = 1.0 + 2.0 * lam / b
        log_m_const = -0.5 * (m - b) + 0.5 * m * math.log(m / b)
        inv_sqrt_omega = 1.0 / np.sqrt(omega)
        while True:
            y = rng.standard_normal(m) * inv_sqrt_omega
            z = y / np.linalg.norm(y)
            log_ratio = -np.sum(lam * z ** 2) + 0.5 * m * math.log(np.sum(omega * z ** 2)) - log_m_const
            if math.log(rng.uniform()) < log_ratio:
                x = Q @ z
                break
    if half_sphere and x[-1] < 0:
        x = -x
    return x

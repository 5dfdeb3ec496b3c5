"""Sphere-geometry oracles: round trips, Jacobian integrals against known
surface areas, and Monte Carlo checks of the normalizing constant and the
exact Bingham-type sampler.
"""

import math

import numpy as np
import pytest
from scipy.integrate import nquad

from mixborrow.sphere import (angle_log_jacobian, angles_to_unit_vector,
                              bingham_log_norm_const, bingham_log_norm_interp,
                              log_sphere_area, sample_bingham,
                              unit_vector_to_angles)

RNG = np.random.default_rng(77)


def test_cascade_round_trip():
    for m in (2, 3, 5, 9):
        for _ in range(20):
            phi = RNG.uniform(-0.5 * np.pi, 0.5 * np.pi, size=m - 1)
            theta = angles_to_unit_vector(phi)
            assert abs(np.linalg.norm(theta) - 1.0) < 1e-12
            assert theta[-1] >= 0.0
            back = unit_vector_to_angles(theta)
            assert np.allclose(angles_to_unit_vector(back), theta, atol=1e-12)


def test_round_trip_from_vectors():
    for m in (3, 6):
        for _ in range(20):
            x = RNG.standard_normal(m)
            x /= np.linalg.norm(x)
            if x[-1] < 0:
                x = -x
            phi = unit_vector_to_angles(x)
            assert np.max(np.abs(angles_to_unit_vector(phi) - x)) < 1e-10


def test_negative_last_coordinate_rejected():
    with pytest.raises(ValueError):
        unit_vector_to_angles(np.array([0.6, 0.0, -0.8]))


def test_jacobian_integrates_to_half_sphere_area():
    # integrating the surface Jacobian over the angle cube must recover the
    # area of the positive-last-coordinate half sphere
    for m in (3, 4):
        val, _ = nquad(
            lambda *phi: math.exp(angle_log_jacobian(np.array(phi))),
            [(-0.5 * np.pi, 0.5 * np.pi)] * (m - 1))
        assert abs(val - 0.5 * math.exp(log_sphere_area(m))) < 1e-6


def test_norm_const_zero_matrix_is_area():
    for m in (2, 3, 7):
        assert abs(bingham_log_norm_const(np.zeros((m, m)))
                   - log_sphere_area(m)) < 1e-10


def test_norm_const_vs_monte_carlo():
    m = 3
    A = np.diag([0.0, 1.0, 4.0])
    n = 400_000
    x = RNG.standard_normal((n, m))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    vals = np.exp(-np.einsum("ni,ij,nj->n", x, A, x))
    mc = math.log(vals.mean()) + log_sphere_area(m)
    se = vals.std() / (vals.mean() * math.sqrt(n))
    assert abs(bingham_log_norm_const(A) - mc) < 4.0 * se + 1e-4


def test_norm_const_shift_invariance():
    # adding c*I multiplies the integral by exp(-c) exactly
    A = np.array([[2.0, 0.3], [0.3, 1.0]])
    c = 3.7
    assert abs(bingham_log_norm_const(A + c * np.eye(2))
               - (bingham_log_norm_const(A) - c)) < 1e-8


def test_interpolated_norm_const_matches_direct():
    penalty = np.diag([0.0, 1.0, 3.0, 6.0])
    fn = bingham_log_norm_interp(penalty)
    for lam in (1e-3, 0.7, 12.0, 4.0e4):
        direct = bingham_log_norm_const(0.5 * lam * penalty)
        assert abs(fn(lam) - direct) < 1e-5
    # outside the table the direct evaluation is used
    assert abs(fn(1e8) - bingham_log_norm_const(0.5e8 * penalty)) < 1e-10


def test_interp_flat_penalty_constant():
    fn = bingham_log_norm_interp(np.zeros((4, 4)))
    assert fn(0.01) == fn(100.0) == pytest.approx(log_sphere_area(4))


def test_sample_bingham_zero_matrix_uniform():
    rng = np.random.default_rng(5)
    m, n = 4, 8000
    draws = np.array([sample_bingham(np.zeros((m, m)), rng) for _ in range(n)])
    assert np.max(np.abs(np.linalg.norm(draws, axis=1) - 1.0)) < 1e-12
    # uniform on the sphere: E[x x'] = I/m
    M = draws.T @ draws / n
    assert np.max(np.abs(M - np.eye(m) / m)) < 0.02


def test_sample_bingham_second_moments_vs_importance():
    # oracle: reweight uniform sphere samples by exp(-x'Ax) and compare the
    # implied second moments with the rejection sampler's empirical moments
    rng = np.random.default_rng(6)
    m = 3
    A = np.array([[1.5, 0.4, 0.0], [0.4, 0.5, 0.2], [0.0, 0.2, 3.0]])
    n = 60_000
    u = rng.standard_normal((n, m))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    w = np.exp(-np.einsum("ni,ij,nj->n", u, A, u))
    w /= w.sum()
    M_ref = (u * w[:, None]).T @ u
    draws = np.array([sample_bingham(A, rng) for _ in range(20_000)])
    M_emp = draws.T @ draws / len(draws)
    assert np.max(np.abs(M_emp - M_ref)) < 0.02


def test_sample_bingham_half_sphere():
    rng = np.random.default_rng(7)
    A = np.diag([0.0, 2.0, 5.0])
    for _ in range(200):
        x = sample_bingham(A, rng, half_sphere=True)
        assert x[-1] >= 0.0

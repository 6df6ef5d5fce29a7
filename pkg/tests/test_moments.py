import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dltime.covariance import CovarianceModel, FieldSpec
from dltime.kernel import heat_kernel_deriv
from dltime.moments import (diagonal_integrand, diagonal_term_F, eps_grid, isserlis_moment,
                            moment_scan, pair_covariance, second_moment_integrand,
                            second_moment_quadrature)
from dltime.quadrature import QuadConfig

from oracles import gauss_hermite_moment, x_space_integrand

B = CovarianceModel.fbm(0.5)
BROWNIAN_1D = FieldSpec(B, B, 1)

# Scrambled-Sobol oracle (8 x 2^20 points over [0,1]^4), mean +- standard error
SOBOL_BROWNIAN_K0 = {0.1: (0.21557997226411, 4.0e-8), 0.05: (0.24195535414276, 1.7e-7)}
SOBOL_BROWNIAN_K1_EPS005 = (0.39482565462699, 6.6e-6)
SOBOL_MIXED_D2_EPS01 = (0.07358423631131, 3.1e-8)  # bifbm(0.75, 0.8) vs subfbm(0.6), k=0


def test_isserlis_examples():
    C = np.array([[1.7, 0.3], [0.3, 0.9]])
    assert isserlis_moment(C, 1, 1) == pytest.approx(0.3)
    assert isserlis_moment(C, 1, 2) == 0.0
    assert isserlis_moment(C, 2, 2) == pytest.approx(1.7 * 0.9 + 2 * 0.09)
    assert isserlis_moment(C, 0, 0) == 1.0
    with pytest.raises(ValueError):
        isserlis_moment(np.array([[1.0, 2.0], [2.0, 1.0]]), 1, 1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3), st.floats(0.1, 3), st.floats(-0.95, 0.95),
       st.integers(0, 8), st.integers(0, 8))
def test_isserlis_matches_gauss_hermite(a, b, rho, k1, k2):
    if k1 + k2 > 8:
        return
    c = rho * math.sqrt(a * b)
    C = np.array([[a, c], [c, b]])
    ref = gauss_hermite_moment(C, k1, k2)
    got = isserlis_moment(C, k1, k2)
    scale = max(a, b) ** ((k1 + k2) / 2)
    assert got == pytest.approx(ref, rel=1e-8, abs=1e-12 * scale)


def test_integrand_normalisation():
    # Sigma = 0 at the origin, so A = I for eps = 1
    assert second_moment_integrand(BROWNIAN_1D, 0, 1.0, (0, 0, 0, 0)) == pytest.approx(
        1 / (2 * math.pi), rel=1e-15)


def test_integrand_k1_sign():
    times = (0.2, 0.7, 0.5, 0.4)
    eps = 0.3
    A = pair_covariance(BROWNIAN_1D, times) + eps * np.eye(2)
    expected = -(2 * math.pi) ** -1 * np.linalg.det(A) ** -0.5 * np.linalg.inv(A)[0, 1]
    assert second_moment_integrand(BROWNIAN_1D, 1, eps, times) == pytest.approx(expected,
                                                                               rel=1e-13)
    assert expected > 0


def test_integrand_matches_adaptive_x_quadrature():
    times = (0.15, 0.6, 0.8, 0.35)
    eps = 0.2
    C = pair_covariance(BROWNIAN_1D, times)
    Ci = np.linalg.inv(C)
    norm = 1 / (2 * math.pi * math.sqrt(np.linalg.det(C)))

    def f(x2, x1):
        x = np.array([x1, x2])
        return (heat_kernel_deriv(1, eps, x1) * heat_kernel_deriv(1, eps, x2)
                * norm * math.exp(-0.5 * x @ Ci @ x))

    ref, _ = integrate.dblquad(f, -8, 8, -8, 8, epsabs=1e-12, epsrel=1e-10)
    assert second_moment_integrand(BROWNIAN_1D, 1, eps, times) == pytest.approx(ref, rel=1e-7)


def test_integrand_matches_x_space_oracle_d2():
    spec = FieldSpec(CovarianceModel.bifbm(0.7, 0.9), CovarianceModel.subfbm(0.4), 2)
    rng = np.random.default_rng(11)
    for k in [(0, 0), (1, 0), (1, 1), (0, 2)]:
        times = rng.uniform(0, 1, 4)
        eps = rng.uniform(0.01, 1)
        ref = x_space_integrand(spec, k, eps, times)
        assert second_moment_integrand(spec, k, eps, times) == pytest.approx(ref, rel=1e-6)


def test_integrand_decreases_in_eps():
    vals = [second_moment_integrand(BROWNIAN_1D, 0, e, (0.3, 0.5, 0.4, 0.9))
            for e in (0.01, 0.1, 1.0)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_dimension_factorisation():
    times = (0.3, 0.8, 0.55, 0.1)
    one = second_moment_integrand(BROWNIAN_1D, 0, 0.2, times)
    two = second_moment_integrand(FieldSpec(B, B, 2), (0, 0), 0.2, times)
    assert two == pytest.approx(one ** 2, rel=1e-14)


def test_diagonal_integrand_positive():
    spec = FieldSpec(CovarianceModel.fbm(0.75), CovarianceModel.fbm(0.75), 1)
    assert diagonal_integrand(spec, 1, 0.1, (0.3, 0.5, 0.4, 0.9)) > 0
    assert diagonal_integrand(spec, 0, 0.1, (0.3, 0.5, 0.4, 0.9)) == pytest.approx(
        second_moment_integrand(spec, 0, 0.1, (0.3, 0.5, 0.4, 0.9)), rel=1e-15)


time_points = st.tuples(*[st.floats(0.01, 1.0)] * 4)


@settings(max_examples=50, deadline=None)
@given(time_points, st.integers(0, 2), st.floats(0.01, 1.0))
def test_integrand_swap_symmetry(times, k, eps):
    s1, s2, t1, t2 = times
    a = second_moment_integrand(BROWNIAN_1D, k, eps, (s1, s2, t1, t2))
    b = second_moment_integrand(BROWNIAN_1D, k, eps, (s2, s1, t2, t1))
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_quadrature_vs_sobol_brownian(eps):
    ref, se = SOBOL_BROWNIAN_K0[eps]
    res = second_moment_quadrature(BROWNIAN_1D, 0, eps)
    assert res.converged and not res.flagged
    assert res.value == pytest.approx(ref, abs=max(5 * se, 1e-5 * ref))


def test_quadrature_vs_sobol_k1():
    ref, se = SOBOL_BROWNIAN_K1_EPS005
    res = second_moment_quadrature(BROWNIAN_1D, 1, 0.05)
    assert abs(res.value - ref) < 4 * se


def test_quadrature_vs_sobol_mixed_d2():
    spec = FieldSpec(CovarianceModel.bifbm(0.75, 0.8), CovarianceModel.subfbm(0.6), 2)
    ref, se = SOBOL_MIXED_D2_EPS01
    res = second_moment_quadrature(spec, (0, 0), 0.1)
    assert res.value == pytest.approx(ref, abs=max(5 * se, 1e-5 * ref))


def test_quadrature_monotone_and_nonnegative():
    a = second_moment_quadrature(BROWNIAN_1D, 0, 0.02)
    b = second_moment_quadrature(BROWNIAN_1D, 0, 0.01)
    assert b.value > a.value
    assert a.value + a.err_estimate >= 0


def test_rectangle_swap_symmetry():
    A = ((0.0, 1.0), (0.0, 1.0))
    Bx = ((1.0, 1.25), (0.0, 1.0))
    ab = second_moment_quadrature(BROWNIAN_1D, 0, 0.01, A, Bx)
    ba = second_moment_quadrature(BROWNIAN_1D, 0, 0.01, Bx, A)
    assert ab.value == pytest.approx(ba.value, rel=1e-6)


def test_F_equals_moment_for_k0():
    a = diagonal_term_F(BROWNIAN_1D, 0, 0.05)
    b = second_moment_quadrature(BROWNIAN_1D, 0, 0.05)
    assert a.value == b.value


def test_scan_helpers():
    g = eps_grid()
    assert g.size == 14 and g[0] == 0.1 and g[1] == 0.05
    with pytest.raises(ValueError):
        moment_scan(BROWNIAN_1D, 0, [0.1], functional="G")
    with pytest.raises(ValueError):
        second_moment_quadrature(BROWNIAN_1D, 0, 0.0)
    res = moment_scan(BROWNIAN_1D, 0, [0.1], cfg=QuadConfig(nodes_per_dim=6))
    assert len(res) == 1 and res[0].eps == 0.1

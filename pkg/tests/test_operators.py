import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, linalg

from jumpspde.operators import (
    DiagonalGenerator,
    SpectrumError,
    convolution_weight,
    generator_identity_suite,
    hille_yosida_verify,
    laplace_resolvent,
    laplacian_dirichlet,
    resolvent_apply,
    semigroup_apply,
    yosida_generator,
    yosida_limits,
    yosida_multiplier,
)

eigs = st.lists(st.floats(-50.0, 2.0, allow_nan=False), min_size=1, max_size=6)
times = st.floats(0.0, 3.0, allow_nan=False)


def test_laplacian_spectrum():
    A = laplacian_dirichlet(5)
    assert np.allclose(A.eigenvalues, -(np.arange(1, 6) * np.pi) ** 2)
    assert A.growth_rate == pytest.approx(-np.pi**2)
    assert A.n_modes == 5


def test_semigroup_matches_matrix_exponential():
    A = DiagonalGenerator([-3.0, -0.5, 1.2])
    x = np.array([1.0, -2.0, 0.5])
    for t in (0.0, 0.3, 2.0):
        oracle = linalg.expm(t * np.diag(A.eigenvalues)) @ x
        assert np.allclose(semigroup_apply(A, t, x), oracle, rtol=1e-14, atol=0)


def test_semigroup_rejects_negative_time():
    with pytest.raises(ValueError):
        semigroup_apply(laplacian_dirichlet(2), -0.1, np.ones(2))


def test_convolution_weight_against_quadrature():
    A = DiagonalGenerator([-4.0, -1e-9, 0.7])
    w = convolution_weight(A, 0.8)
    for k, a in enumerate(A.eigenvalues):
        oracle, _ = integrate.quad(lambda s: math.exp(a * s), 0.0, 0.8, epsabs=1e-14)
        assert w[k] == pytest.approx(oracle, rel=1e-12)


def test_resolvent_against_linear_solve():
    A = laplacian_dirichlet(4)
    x = np.arange(1.0, 5.0)
    lam = 3.0
    oracle = np.linalg.solve(lam * np.eye(4) - np.diag(A.eigenvalues), x)
    assert np.allclose(resolvent_apply(A, lam, x), oracle, rtol=1e-14)
    R = yosida_multiplier(A, lam)
    assert np.allclose(R * x, lam * oracle, rtol=1e-14)
    Rmat = np.linalg.inv(lam * np.eye(4) - np.diag(A.eigenvalues))
    oracle_gen = lam * lam * Rmat - lam * np.eye(4)
    assert np.allclose(np.diag(yosida_generator(A, lam).eigenvalues), oracle_gen, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("fn", [resolvent_apply, lambda A, lam, x: yosida_multiplier(A, lam)])
def test_spectrum_error_below_growth_bound(fn):
    A = DiagonalGenerator([-1.0, 0.5])
    with pytest.raises(SpectrumError):
        fn(A, 0.5, np.ones(2))


def test_hille_yosida_rows_are_tight_for_diagonal_generators():
    A = laplacian_dirichlet(8)
    rep = hille_yosida_verify(A, [1.0, 10.0, 100.0], 5)
    assert rep.passed and len(rep.rows) == 15
    for lam, r, norm, bound, slack in rep.rows:
        assert norm == pytest.approx((lam + np.pi**2) ** (-r), rel=1e-14)
        assert slack >= 0


def test_laplace_transform_recovers_resolvent():
    A = DiagonalGenerator([-2.0, -5.0])
    x = np.array([1.0, 1.0])
    approx = laplace_resolvent(A, 1.0, x, 200_000)
    assert np.allclose(approx, x / (1.0 - A.eigenvalues), atol=1e-8)


def test_identity_suite_residuals():
    rep = generator_identity_suite(laplacian_dirichlet(3), 0.5, 2.0, np.ones(3), 50_000)
    assert rep.integral_residual < 1e-12
    assert rep.laplace_residual < 1e-6
    assert rep.derivative_residual < 1e-6


def test_yosida_limits_shrink():
    lims = yosida_limits(laplacian_dirichlet(4), np.ones(4), [10.0, 100.0, 1000.0], np.linspace(0, 1, 11))
    for vals in (lims.resolvent_gap, lims.generator_gap, lims.semigroup_gap):
        assert np.all(np.diff(vals) < 0)


@given(eigs, times, times)
@settings(max_examples=60, deadline=None)
def test_semigroup_property(a, s, t):
    A = DiagonalGenerator(a)
    x = np.linspace(-1.0, 1.0, len(a))
    lhs = semigroup_apply(A, s + t, x)
    rhs = semigroup_apply(A, s, semigroup_apply(A, t, x))
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-300)


@given(eigs, times)
@settings(max_examples=60, deadline=None)
def test_growth_bound(a, t):
    A = DiagonalGenerator(a)
    assert A.semigroup_norm(t) <= math.exp(A.growth_rate * t) * (1 + 1e-15)


@given(eigs, st.floats(0.1, 100.0), st.integers(1, 5))
@settings(max_examples=60, deadline=None)
def test_hille_yosida_property(a, offset, r):
    A = DiagonalGenerator(a)
    lam = A.growth_rate + offset
    rep = hille_yosida_verify(A, [lam], r)
    assert rep.passed

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpspde.integrator import (
    SimulationGrid,
    additive_coefficients,
    linear_coefficients,
    saturating_coefficients,
    zero_coefficients,
)
from jumpspde.noise import AtomMarks, GaussianMarks
from jumpspde.operators import DiagonalGenerator, laplacian_dirichlet
from jumpspde.stability import (
    EquilibriumError,
    certified_rate,
    dissipativity_estimate,
    exp_stability_check,
    fit_decay_rate,
    generator_apply,
    generator_yosida_apply,
    lyapunov_check,
    mean_square_decay,
    quadratic_lyapunov,
)

MULT = AtomMarks(4.0, [[0.5], [-0.5]])


def test_generator_on_quadratic_linear_model():
    A = DiagonalGenerator([-2.0, -5.0])
    coeffs = linear_coefficients(MULT, 2, jump_scale=1.5)
    H = quadratic_lyapunov(2)
    x = np.array([1.0, -0.5])
    # 2<x, Ax> + g^2 m2 ||x||^2 with m2 = 1
    oracle = 2 * (-2.0 * 1.0 - 5.0 * 0.25) + 2.25 * 1.25
    assert generator_apply(A, coeffs, MULT, H, x) == pytest.approx(oracle, rel=1e-13)


def test_weighted_quadratic_uses_quadrature():
    A = DiagonalGenerator([-1.0, -1.0])
    m = GaussianMarks(2.0, [0.0], [1.0])
    coeffs = additive_coefficients(m, [[1.0], [2.0]])
    H = quadratic_lyapunov(2, weights=[1.0, 3.0])
    x = np.array([0.5, 1.0])
    # 2 sum q_k a_k x_k^2 + sum q_k M_k^2 m2 with m2 = 2
    oracle = 2 * (-0.25 - 3.0) + (1.0 + 3.0 * 4.0) * 2.0
    assert generator_apply(A, coeffs, m, H, x) == pytest.approx(oracle, rel=1e-12)


def test_yosida_generator_converges():
    A = laplacian_dirichlet(3)
    coeffs = linear_coefficients(MULT, 3)
    H = quadratic_lyapunov(3)
    x = np.ones(3)
    full = generator_apply(A, coeffs, MULT, H, x)
    gaps = [abs(generator_yosida_apply(A, coeffs, MULT, H, x, n) - full) for n in (10.0, 1e3, 1e5)]
    assert gaps[0] > gaps[1] > gaps[2]
    with pytest.raises(ValueError):
        generator_yosida_apply(A, coeffs, MULT, H, x, -20.0)


def test_certified_rate_and_empirical_dissipativity():
    A = laplacian_dirichlet(3)
    coeffs = linear_coefficients(MULT, 3, drift_scale=0.5, jump_scale=1.0)
    alpha, eps = certified_rate(A, coeffs)
    assert alpha == pytest.approx(np.pi**2 - 0.5)
    assert eps == pytest.approx(2 * alpha - 1.0)
    gen = np.random.default_rng(0)
    rep = dissipativity_estimate(A, coeffs, list(zip(gen.normal(size=(30, 3)), gen.normal(size=(30, 3)))))
    assert rep.empirical >= rep.analytic - 1e-12
    with pytest.raises(ValueError):
        dissipativity_estimate(A, coeffs, [(np.ones(3), np.ones(3))])


def test_lyapunov_constant_for_laplacian_linear_model():
    A = laplacian_dirichlet(4)
    coeffs = linear_coefficients(MULT, 4, jump_scale=2.0)
    H = quadratic_lyapunov(4)
    probes = np.random.default_rng(1).normal(size=(20, 4))
    rep = lyapunov_check(H, A, coeffs, MULT, probes)
    assert rep.passed
    assert rep.c3 == pytest.approx(2 * np.pi**2 - 4.0, rel=1e-12)
    assert H.c3 == rep.c3


def test_lyapunov_fails_without_decay():
    A = DiagonalGenerator([-0.1])
    rep = lyapunov_check(quadratic_lyapunov(1), A, linear_coefficients(MULT, 1, jump_scale=1.0), MULT,
                         np.array([[1.0], [2.0]]))
    assert not rep.passed and rep.witness is not None


def test_refusal_when_eps_nonpositive():
    A = DiagonalGenerator([-0.1])
    coeffs = linear_coefficients(MULT, 1, jump_scale=1.0)
    rep = mean_square_decay(A, coeffs, MULT, [1.0], [0.0], SimulationGrid(0.5, 10), paths=20)
    assert not rep.certified and not rep.passed
    assert "certification refused" in rep.message


def test_additive_decay_is_exact():
    A = DiagonalGenerator([-1.5])
    coeffs = additive_coefficients(MULT, [[1.0]])
    rep = mean_square_decay(A, coeffs, MULT, [2.0], [0.5], SimulationGrid(1.0, 100), paths=50, record=10)
    assert np.allclose(rep.decay, 2.25 * np.exp(-3.0 * rep.times), rtol=1e-12)
    assert rep.passed


def test_exp_stability_requires_equilibrium():
    A = DiagonalGenerator([-1.0])
    H = quadratic_lyapunov(1)
    H.c3 = 1.0
    with pytest.raises(EquilibriumError):
        exp_stability_check(A, additive_coefficients(MULT, [[1.0]]), MULT, H, [1.0],
                            SimulationGrid(1.0, 10), paths=10)


def test_exp_stability_random_initial_states():
    A = laplacian_dirichlet(2)
    coeffs = saturating_coefficients(MULT, 2)
    H = quadratic_lyapunov(2)
    lyapunov_check(H, A, coeffs, MULT, np.random.default_rng(0).normal(size=(10, 2)))
    rep = exp_stability_check(A, coeffs, MULT, H, lambda g, n: g.normal(size=(n, 2)),
                              SimulationGrid(0.5, 50), paths=500, record=10)
    assert rep.passed


def test_zero_model_certifies_with_zero_noise():
    A = laplacian_dirichlet(2)
    H = quadratic_lyapunov(2)
    rep = lyapunov_check(H, A, zero_coefficients(2), MULT, np.eye(2))
    assert rep.c3 == pytest.approx(2 * np.pi**2)


@given(st.floats(0.01, 10.0), st.floats(0.1, 10.0))
@settings(max_examples=50, deadline=None)
def test_fit_decay_rate_recovers_exponentials(rate, scale):
    t = np.linspace(0.0, 2.0, 21)
    assert fit_decay_rate(t, scale * np.exp(-rate * t)) == pytest.approx(rate, rel=1e-9, abs=1e-12)

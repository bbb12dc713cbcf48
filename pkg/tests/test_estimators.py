import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from jumpspde.estimators import InvariantMeasureSampler, MildSolutionSimulator
from jumpspde.integrator import SPDEModel, additive_coefficients, zero_coefficients
from jumpspde.noise import AtomMarks
from jumpspde.operators import DiagonalGenerator, laplacian_dirichlet

OU = AtomMarks(2.0, [[1.0], [-1.0]])
OU_MODEL = SPDEModel(DiagonalGenerator([-1.0]), additive_coefficients(OU, [[1.0]]), OU)


def test_params_and_clone():
    est = MildSolutionSimulator(model=OU_MODEL, horizon=0.5, steps=50, seed=3)
    assert est.get_params()["steps"] == 50
    twin = clone(est).set_params(seed=4)
    assert twin.seed == 4 and est.seed == 3


def test_transform_before_fit():
    with pytest.raises(NotFittedError):
        MildSolutionSimulator(model=OU_MODEL).transform(np.ones((2, 1)))


def test_noise_free_transform_is_semigroup():
    A = laplacian_dirichlet(3)
    est = MildSolutionSimulator(model=SPDEModel(A, zero_coefficients(3), OU), horizon=0.2, steps=10)
    X = np.array([[1.0, 2.0, 3.0], [0.0, -1.0, 0.5]])
    out = est.fit(X).transform(X)
    assert np.allclose(out, X * np.exp(0.2 * A.eigenvalues), rtol=1e-12)


def test_fit_certifies_and_transform_is_deterministic():
    est = MildSolutionSimulator(model=OU_MODEL, horizon=1.0, steps=100, seed=1).fit()
    assert est.epsilon_ == pytest.approx(2.0)
    X = np.ones((5, 1))
    assert np.array_equal(est.transform(X), est.transform(X))
    with pytest.raises(ValueError):
        est.transform(np.ones((2, 3)))


def test_config_dict_model():
    cfg = {"experiment": "simulate", "model": {"family": "explicit", "eigenvalues": [-1.0]},
           "noise": {"rate": 2.0, "mark_family": {"type": "atoms", "points": [[1.0], [-1.0]]}},
           "coefficients": {"preset": "additive", "mark_map": [[1.0]]}}
    out = MildSolutionSimulator(model=cfg, steps=20).fit_transform(np.zeros((3, 1)))
    assert out.shape == (3, 1)


def test_invariant_sampler_estimator():
    est = InvariantMeasureSampler(model=OU_MODEL, samples=1500, seed=2).fit()
    assert est.sample_.shape == (1500, 1)
    assert est.second_moment_ == pytest.approx(1.0, rel=0.2)

"""Estimator-style wrappers around the simulator and the invariant sampler."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import build_model, validate_config
from .integrator import SimulationGrid, SPDEModel, iterate_scheme, validate_coefficients
from .noise import sample_train_batch
from .stability import certified_rate
from .transport import invariant_measure_sampler


def _resolve_model(model) -> SPDEModel:
    if isinstance(model, SPDEModel):
        return model
    if isinstance(model, dict):
        return build_model(validate_config(model))
    raise TypeError("model must be an SPDEModel or a config dict")


class MildSolutionSimulator(TransformerMixin, BaseEstimator):
    """Push initial states forward through the exponential Euler mild scheme.

    ``fit`` validates the coefficients against the jump measure and
    certifies the dissipativity rate; ``transform`` maps each row of ``X``
    (an initial state) to a state at ``horizon``, one noise stream per row.
    """

    def __init__(self, model=None, horizon=1.0, steps=1000, seed=0, yosida_n=None):
        self.model = model
        self.horizon = horizon
        self.steps = steps
        self.seed = seed
        self.yosida_n = yosida_n

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("model is required")
        model = _resolve_model(self.model)
        N = model.generator.n_modes
        if X is not None:
            X = check_array(X, dtype=np.float64)
            if X.shape[1] != N:
                raise ValueError(f"X has {X.shape[1]} columns, model has {N} modes")
        gen = np.random.default_rng(0)
        probes = list(zip(gen.standard_normal((10, N)), gen.standard_normal((10, N))))
        self.coefficient_report_ = validate_coefficients(model.coefficients, model.measure, probes)
        self.alpha_dis_, self.epsilon_ = certified_rate(model.generator, model.coefficients)
        self.model_ = model
        self.grid_ = SimulationGrid(float(self.horizon), int(self.steps))
        self.n_features_in_ = N
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        m = self.model_
        batch = sample_train_batch(m.measure, self.grid_.T, int(self.seed), np.arange(X.shape[0]))
        x = X.copy()
        for x in iterate_scheme(m.generator, m.coefficients, self.grid_, X.copy(), batch.times,
                                batch.marks, batch.path, self.yosida_n):
            pass
        return np.asarray(x)


class InvariantMeasureSampler(BaseEstimator):
    """Long-run sampler of the invariant law; ``sample_`` holds the draws."""

    def __init__(self, model=None, samples=1000, seed=0, burn_in=None, gap=None, substeps=10):
        self.model = model
        self.samples = samples
        self.seed = seed
        self.burn_in = burn_in
        self.gap = gap
        self.substeps = substeps

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("model is required")
        model = _resolve_model(self.model)
        inv = invariant_measure_sampler(model, int(self.samples), int(self.seed), self.burn_in,
                                        self.gap, int(self.substeps))
        self.model_ = model
        self.sample_ = inv.measure.points
        self.stationarity_distance_ = inv.stationarity_distance
        self.self_distance_ = inv.self_distance
        self.stationary_ = inv.stationary
        self.second_moment_ = inv.measure.second_moment()
        self.n_features_in_ = model.generator.n_modes
        return self


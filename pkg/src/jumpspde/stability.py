"""Lyapunov generators, dissipativity and mean-square stability checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .integrator import (
    CoefficientSet,
    MildPath,
    SimulationGrid,
    _initial_block,
    _record_indices,
    iterate_scheme,
    jump_sq_mean,
)
from .noise import RngStream, map_streams, sample_train_batch
from .operators import DiagonalGenerator, yosida_multiplier

MULTIPLICATIVE_SLACK = 0.1
SIGMA_BAND = 3.0


class EquilibriumError(ValueError):
    """The origin is not an equilibrium of the equation."""


@dataclass
class LyapunovFunction:
    """Candidate Lyapunov function with derivative data and growth envelopes.

    ``value`` maps ``(P, N) -> (P,)``, ``gradient`` maps ``(P, N) -> (P, N)``
    and ``hessian_apply(x, v)`` returns the second derivative at ``x``
    applied to ``v``. ``h1``/``h2`` bound the gradient and Hessian norms as
    functions of ``||x||``. ``weights`` is set for diagonal quadratic forms
    ``sum_k q_k x_k^2``, which unlocks closed-form generator evaluation.
    """

    value: Callable
    gradient: Callable
    hessian_apply: Callable
    c1: float
    c2: float
    h1: Callable
    h2: Callable
    c3: float | None = None
    weights: np.ndarray | None = None


def quadratic_lyapunov(n_modes: int, weights=None) -> LyapunovFunction:
    """``H(x) = sum_k q_k x_k^2``; the default ``q = 1`` gives ``||x||^2``."""
    q = np.ones(n_modes) if weights is None else np.asarray(weights, dtype=np.float64)
    if q.shape != (n_modes,) or np.any(q <= 0):
        raise ValueError("weights must be positive, one per mode")
    top = float(q.max())
    return LyapunovFunction(
        value=lambda x: np.sum(q * np.atleast_2d(x) ** 2, axis=-1),
        gradient=lambda x: 2.0 * q * np.atleast_2d(x),
        hessian_apply=lambda x, v: 2.0 * q * np.asarray(v, dtype=np.float64),
        c1=float(q.min()),
        c2=top,
        h1=lambda r: 2.0 * top * np.asarray(r, dtype=np.float64),
        h2=lambda r: np.full_like(np.asarray(r, dtype=np.float64), 2.0 * top),
        weights=q,
    )


def _jump_term(A, coeffs, measure, H, X, reg, order=8):
    """``int H(x + f) - H(x) - <grad H(x), f> beta(du)`` per row of ``X``."""
    ones = H.weights is not None and np.all(H.weights == 1.0)
    if ones and reg is None and coeffs.jump_sq_mean is not None:
        return jump_sq_mean(coeffs, measure, X)
    nodes, weights = measure.quadrature(order)
    P, m = X.shape[0], nodes.shape[0]
    xr = np.repeat(X, m, axis=0)
    ur = np.tile(nodes, (P, 1))
    f = coeffs.jump(ur, xr)
    if reg is not None:
        f = reg * f
    if H.weights is not None:
        integrand = np.sum(H.weights * f * f, axis=1)
    else:
        integrand = H.value(xr + f) - H.value(xr) - np.sum(H.gradient(xr) * f, axis=1)
    integrand = integrand.reshape(P, m)
    if not np.all(np.isfinite(integrand)):
        bad = np.argwhere(~np.isfinite(integrand))[0]
        raise FloatingPointError(f"generator integrand not finite near mark {nodes[bad[1]].tolist()}")
    return integrand @ weights


def generator_apply(A: DiagonalGenerator, coeffs: CoefficientSet, measure, H: LyapunovFunction, x,
                    n=None):
    """Generator of the equation applied to ``H`` at ``x``.

    ``<grad H(x), A x + F(x)> + int (H(x + f(u,x)) - H(x) - <grad H(x), f(u,x)>) beta(du)``;
    with ``n`` set, ``F`` and ``f`` are replaced by ``R_n F`` and ``R_n f``.
    Returns a float for a single state, an array for a batch.
    """
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    reg = None if n is None else yosida_multiplier(A, n)
    F = coeffs.drift(X)
    if reg is not None:
        F = reg * F
    out = np.sum(H.gradient(X) * (A.apply(X) + F), axis=1) + _jump_term(A, coeffs, measure, H, X, reg)
    return float(out[0]) if single else out


def generator_yosida_apply(A, coeffs, measure, H, x, n):
    """Generator of the ``R_n``-regularised equation applied to ``H`` at ``x``."""
    if not n > A.growth_rate:
        raise ValueError(f"n={n} must exceed the growth rate {A.growth_rate}")
    return generator_apply(A, coeffs, measure, H, x, n=n)


def generator_gap(A, coeffs, measure, H, path: MildPath, n) -> float:
    """``max_k |L H(X^n_{t_k}) - L_n H(X^n_{t_k})|`` along a Yosida path."""
    if path.scheme not in ("mild", f"yosida{{{n}}}"):
        raise ValueError(f"path was produced by scheme {path.scheme}, expected yosida{{{n}}}")
    states = path.states
    full = generator_apply(A, coeffs, measure, H, states)
    reg = generator_apply(A, coeffs, measure, H, states, n=n)
    return float(np.max(np.abs(full - reg)))


@dataclass
class DissipativityReport:
    empirical: float
    analytic: float
    certified: float | None


def dissipativity_estimate(A: DiagonalGenerator, coeffs: CoefficientSet, probes) -> DissipativityReport:
    """Empirical and analytic dissipativity constants.

    The empirical value is ``min -(<A(x-y) + F(x) - F(y), x-y>) / ||x-y||^2``
    over the probe pairs; the analytic bound ``min_k(-a_k) - sqrt(L_F)`` holds
    for every pair, and only it is used for certification.
    """
    X = np.stack([np.asarray(p[0], dtype=np.float64) for p in probes])
    Y = np.stack([np.asarray(p[1], dtype=np.float64) for p in probes])
    D = X - Y
    d2 = np.sum(D * D, axis=1)
    if np.any(d2 == 0):
        raise ValueError("probe pairs must have x != y")
    inner = np.sum((A.apply(D) + coeffs.drift(X) - coeffs.drift(Y)) * D, axis=1)
    empirical = float(np.min(-inner / d2))
    analytic = float(np.min(-A.eigenvalues) - math.sqrt(coeffs.lip_drift))
    return DissipativityReport(empirical, analytic, analytic if analytic > 0 else None)


def certified_rate(A, coeffs) -> tuple[float, float]:
    """``(alpha_dis, eps)`` with ``eps = 2 alpha_dis - L_f`` from the analytic bound."""
    alpha = float(np.min(-A.eigenvalues) - math.sqrt(coeffs.lip_drift))
    return alpha, 2.0 * alpha - coeffs.lip_jump


@dataclass
class LyapunovReport:
    c1: float
    c2: float
    c3: float | None
    passed: bool
    quasi_sublinear_constant: float
    witness: np.ndarray | None = None
    message: str = ""


def _quasi_sublinear_constant(h, radii):
    r = np.asarray(radii, dtype=np.float64)
    r = r[r > 0]
    x, y = np.meshgrid(r, r, indexing="ij")
    hx, hy = h(x), h(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        add = np.nanmax(np.where(hx + hy > 0, h(x + y) / (hx + hy), 0.0))
        mul = np.nanmax(np.where(hx * hy > 0, h(x * y) / (hx * hy), 0.0))
    return float(max(add, mul))


def lyapunov_check(H: LyapunovFunction, A, coeffs, measure, probes, rtol: float = 1e-12) -> LyapunovReport:
    """Check the sandwich bound and the decay condition ``L H <= -c3 H`` on probes.

    Returns the largest ``c3`` that passes every probe (stored on ``H`` as well).
    The probes are augmented with every eigen-direction of ``A`` at every
    probe radius, where the decay ratio of a diagonal model is extremal.
    """
    X = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    radii = np.unique(np.linalg.norm(X, axis=1))
    axes = np.concatenate([np.eye(X.shape[1]) * r for r in radii[radii > 0]] + [-np.eye(X.shape[1]) * radii[-1]])
    X = np.concatenate([X, axes])
    norms2 = np.sum(X * X, axis=1)
    vals = H.value(X)
    lo_ok = vals >= H.c1 * norms2 * (1 - rtol) - rtol
    hi_ok = vals <= H.c2 * norms2 * (1 + rtol) + rtol
    grad_norm = np.linalg.norm(H.gradient(X), axis=1)
    radii = np.sqrt(norms2)
    env_ok = grad_norm <= H.h1(radii) * (1 + rtol) + rtol
    N = X.shape[1]
    hess = np.array([
        np.linalg.norm(np.stack([H.hessian_apply(x, e) for e in np.eye(N)], axis=1), 2) for x in X
    ])
    env_ok &= hess <= H.h2(radii) * (1 + rtol) + rtol
    C = max(_quasi_sublinear_constant(H.h1, radii), _quasi_sublinear_constant(H.h2, radii))
    c1, c2 = H.c1, H.c2
    if not (np.all(lo_ok) and np.all(hi_ok)):
        bad = int(np.flatnonzero(~(lo_ok & hi_ok))[0])
        return LyapunovReport(c1, c2, None, False, C, X[bad], "sandwich condition violated")
    if not np.all(env_ok):
        bad = int(np.flatnonzero(~env_ok)[0])
        return LyapunovReport(c1, c2, None, False, C, X[bad], "derivative envelope violated")

    LH = generator_apply(A, coeffs, measure, H, X)
    zero = vals <= 0
    if np.any(zero & (LH > rtol)):
        bad = int(np.flatnonzero(zero & (LH > rtol))[0])
        return LyapunovReport(c1, c2, None, False, C, X[bad],
                              f"decay condition fails at equilibrium candidate: L H = {LH[bad]:.6g} > 0")
    if not np.any(~zero):
        return LyapunovReport(c1, c2, None, False, C, None, "no nonzero probes")
    c3 = float(np.min(-LH[~zero] / vals[~zero]))
    if c3 <= 0:
        bad = int(np.flatnonzero(~zero)[np.argmin(-LH[~zero] / vals[~zero])])
        return LyapunovReport(c1, c2, c3, False, C, X[bad], "no positive decay constant")
    H.c3 = c3
    return LyapunovReport(c1, c2, c3, True, C)


@dataclass
class StabilityReport:
    alpha_dis: float
    epsilon: float
    times: np.ndarray
    decay: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    fitted_rate: float
    continuity_constant: float
    certified: bool
    passed: bool
    message: str = ""
    variance: np.ndarray = field(default_factory=lambda: np.zeros(0))


def fit_decay_rate(times, values) -> float:
    """Least-squares exponential rate ``r`` in ``values ~ c e^{-r t}``."""
    t = np.asarray(times, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    keep = v > 0
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(t[keep], np.log(v[keep]), 1)[0]
    return float(-slope)


def coupled_difference(A, coeffs, measure, grid: SimulationGrid, xi, eta, paths: int, seed: int,
                       record=None, n_jobs: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Squared distance ``||X^xi_t - X^eta_t||^2`` per path under synchronous
    coupling (both solutions read the same jump train). Returns recorded
    times and a ``(P, R)`` array."""
    rec = _record_indices(grid, record)
    N = A.n_modes

    def run(ids):
        batch = sample_train_batch(measure, grid.T, seed, ids)
        args = (batch.times, batch.marks, batch.path)
        a = iterate_scheme(A, coeffs, grid, _initial_block(xi, ids.size, N), *args)
        b = iterate_scheme(A, coeffs, grid, _initial_block(eta, ids.size, N), *args)
        out = np.empty((ids.size, rec.size))
        j = 0
        for k, (x, y) in enumerate(zip(a, b)):
            if j < rec.size and rec[j] == k:
                out[:, j] = np.sum((x - y) ** 2, axis=1)
                j += 1
        return out

    return grid.times[rec], map_streams(run, np.arange(paths), n_jobs)


def mean_square_decay(A, coeffs, measure, xi, eta, grid: SimulationGrid, paths: int, seed: int = 0,
                      record=None, n_jobs: int = 1) -> StabilityReport:
    """Coupled Monte Carlo check of ``E||X^xi_t - X^eta_t||^2 <= e^{-eps t} ||xi - eta||^2``."""
    xi = np.asarray(xi, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    alpha, eps = certified_rate(A, coeffs)
    times, sq = coupled_difference(A, coeffs, measure, grid, xi, eta, paths, seed, record, n_jobs)
    D = sq.mean(axis=0)
    var = sq.var(axis=0, ddof=1) if paths > 1 else np.zeros_like(D)
    se = np.sqrt(var / paths)
    D0 = float(np.sum((xi - eta) ** 2))
    bound = D0 * np.exp(-eps * times)
    C = float(D.max() / D0) if D0 > 0 else 0.0
    rate = fit_decay_rate(times, D)
    if eps <= 0 or alpha <= 0:
        return StabilityReport(alpha, eps, times, D, se, bound, rate, C, False, False,
                               "certification refused: eps <= 0", var)
    ok = bool(np.all(D <= bound * (1 + MULTIPLICATIVE_SLACK) + SIGMA_BAND * se))
    return StabilityReport(alpha, eps, times, D, se, bound, rate, C, True, ok, "", var)


@dataclass
class ExpStabilityReport:
    times: np.ndarray
    second_moment: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    c: float
    rate: float
    passed: bool


def check_equilibrium(coeffs: CoefficientSet, measure, n_modes: int, atol: float = 0.0):
    zero = np.zeros((1, n_modes))
    if np.linalg.norm(coeffs.drift(zero)) > atol:
        raise EquilibriumError("F(0) != 0: the origin is not an equilibrium of the drift")
    if float(jump_sq_mean(coeffs, measure, zero)[0]) > atol:
        raise EquilibriumError("f(u, 0) != 0 on a set of positive beta measure")


def exp_stability_check(A, coeffs, measure, H: LyapunovFunction, xi, grid: SimulationGrid, paths: int,
                        seed: int = 0, record=None, n_jobs: int = 1) -> ExpStabilityReport:
    """Check ``E||X_t||^2 <= (c2/c1) e^{-c3 t} E||xi||^2 + 3 s.e.`` on the grid.

    ``xi`` is a fixed state or a callable ``xi(generator, size) -> (size, N)``
    drawing initial states.
    """
    if H.c3 is None:
        raise ValueError("run lyapunov_check first to certify c3")
    check_equilibrium(coeffs, measure, A.n_modes)
    N = A.n_modes
    if callable(xi):
        x0 = np.asarray(xi(RngStream(seed, 2**64 - 1).generator(), paths), dtype=np.float64)
    else:
        x0 = _initial_block(xi, paths, N)
    rec = _record_indices(grid, record)

    def run(ids):
        batch = sample_train_batch(measure, grid.T, seed, ids)
        rows = ids.astype(np.int64)
        out = np.empty((ids.size, rec.size))
        j = 0
        for k, x in enumerate(iterate_scheme(A, coeffs, grid, x0[rows], batch.times, batch.marks, batch.path)):
            if j < rec.size and rec[j] == k:
                out[:, j] = np.sum(x * x, axis=1)
                j += 1
        return out

    sq = map_streams(run, np.arange(paths), n_jobs)
    times = grid.times[rec]
    m = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(paths) if paths > 1 else np.zeros_like(m)
    c = H.c2 / H.c1
    bound = c * np.exp(-H.c3 * times) * float(np.mean(np.sum(x0 * x0, axis=1)))
    ok = bool(np.all(m <= bound + SIGMA_BAND * se))
    return ExpStabilityReport(times, m, se, bound, c, H.c3, ok)

"""Exponential Euler integration of jump-driven semilinear equations.

The scheme advances the mild formulation exactly for the linear part: over a
step of length ``dt`` starting from ``x``

    x' = S_dt x + W(dt) (F(x) - int f(u, x) beta(du)) + sum_j S_{dt - d_j} f(u_j, x)

where ``W(dt) = int_0^dt S_s ds`` and the sum runs over the jumps falling in the
step (``d_j`` is the offset of jump ``j`` from the step start). Coefficients
are frozen at the left endpoint. The Yosida-regularised variant multiplies
drift, jump coefficient and initial state by ``R_n = n R(n, A)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .noise import (
    JumpTrain,
    MarkMeasure,
    RngStream,
    TrainBatch,
    map_streams,
    sample_jump_train,
    sample_train_batch,
)
from .operators import DiagonalGenerator, convolution_weight, yosida_multiplier

DIVERGENCE_THRESHOLD = 1e12


class DivergenceError(FloatingPointError):
    """A path left the ball of radius ``DIVERGENCE_THRESHOLD`` or became non-finite."""

    def __init__(self, message, step=None, path=None):
        super().__init__(message)
        self.step = step
        self.path = path


class CoefficientValidationError(ValueError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# coefficients


@dataclass
class CoefficientSet:
    """Drift ``F`` and jump coefficient ``f(u, z)`` with their constants.

    All callables are vectorised over a leading batch axis: ``drift(z)`` and
    ``compensator_mean(z)`` map ``(P, N) -> (P, N)``; ``jump(u, z)`` maps marks
    ``(m, d)`` and states ``(m, N)`` to ``(m, N)``. ``jump_sq_mean(z)`` returns
    ``int ||f(u, z)||^2 beta(du)`` per row when known in closed form.
    """

    drift: Callable
    jump: Callable
    lip_drift: float
    lip_jump: float
    f0_sq: float
    compensator_mean: Callable
    jump_sq_mean: Callable | None = None
    name: str = "custom"
    state_independent_jump: bool = False
    params: dict = field(default_factory=dict)

    @property
    def growth_constant(self) -> float:
        return 2.0 * max(self.lip_jump, self.f0_sq)

    @property
    def has_equilibrium_at_origin(self) -> bool:
        return bool(self.params.get("equilibrium", False))


def _zeros_like(z):
    return np.zeros_like(np.asarray(z, dtype=np.float64))


def zero_coefficients(n_modes: int) -> CoefficientSet:
    return CoefficientSet(
        drift=_zeros_like,
        jump=lambda u, z: np.zeros((len(u), n_modes)),
        lip_drift=0.0,
        lip_jump=0.0,
        f0_sq=0.0,
        compensator_mean=_zeros_like,
        jump_sq_mean=lambda z: np.zeros(len(z)),
        name="zero",
        state_independent_jump=True,
        params={"equilibrium": True},
    )


def linear_coefficients(measure: MarkMeasure, n_modes: int, drift_scale: float = 0.0,
                        jump_scale: float = 1.0) -> CoefficientSet:
    """``F(z) = drift_scale * z`` and ``f(u, z) = jump_scale * u_1 * z``."""
    c, g = float(drift_scale), float(jump_scale)
    m1 = float(measure.mean_mark()[0])
    m2 = float(measure.second_moment_matrix()[0, 0])
    return CoefficientSet(
        drift=lambda z: c * z,
        jump=lambda u, z: g * u[:, :1] * z,
        lip_drift=c * c,
        lip_jump=g * g * m2,
        f0_sq=0.0,
        compensator_mean=lambda z: (g * m1) * z,
        jump_sq_mean=lambda z: g * g * m2 * np.sum(z * z, axis=1),
        name="linear",
        params={"drift_scale": c, "jump_scale": g, "equilibrium": True},
    )


def additive_coefficients(measure: MarkMeasure, mark_map, drift_scale: float = 0.0) -> CoefficientSet:
    """State-independent jumps ``f(u, z) = M u`` for an ``(N, d)`` mark map ``M``."""
    M = np.atleast_2d(np.asarray(mark_map, dtype=np.float64))
    if M.shape[1] != measure.dim:
        raise ValueError(f"mark map has {M.shape[1]} columns, marks have dimension {measure.dim}")
    c = float(drift_scale)
    mean = M @ measure.mean_mark()
    sq = float(np.trace(M @ measure.second_moment_matrix() @ M.T))
    return CoefficientSet(
        drift=lambda z: c * z,
        jump=lambda u, z: np.broadcast_to(u @ M.T, np.shape(z)).copy(),
        lip_drift=c * c,
        lip_jump=0.0,
        f0_sq=sq,
        compensator_mean=lambda z: np.broadcast_to(mean, np.shape(z)).copy(),
        jump_sq_mean=lambda z: np.full(len(z), sq),
        name="additive",
        state_independent_jump=True,
        params={"mark_map": M.tolist(), "drift_scale": c, "equilibrium": sq == 0.0},
    )


def saturating_coefficients(measure: MarkMeasure, n_modes: int, scale: float = 1.0,
                            drift_scale: float = 0.0) -> CoefficientSet:
    """``f(u, z) = scale * u_1 * tanh(z)`` (componentwise), ``F(z) = drift_scale * z``."""
    s, c = float(scale), float(drift_scale)
    m1 = float(measure.mean_mark()[0])
    m2 = float(measure.second_moment_matrix()[0, 0])
    return CoefficientSet(
        drift=lambda z: c * z,
        jump=lambda u, z: s * u[:, :1] * np.tanh(z),
        lip_drift=c * c,
        lip_jump=s * s * m2,
        f0_sq=0.0,
        compensator_mean=lambda z: (s * m1) * np.tanh(z),
        jump_sq_mean=lambda z: s * s * m2 * np.sum(np.tanh(z) ** 2, axis=1),
        name="saturating",
        params={"scale": s, "drift_scale": c, "equilibrium": True},
    )


def jump_sq_mean(coeffs: CoefficientSet, measure: MarkMeasure, z, order: int = 8) -> np.ndarray:
    """``int ||f(u, z)||^2 beta(du)`` for each row of ``z``."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if coeffs.jump_sq_mean is not None:
        return np.asarray(coeffs.jump_sq_mean(z), dtype=np.float64)
    nodes, weights = measure.quadrature(order)
    out = np.empty(len(z))
    for i, row in enumerate(z):
        vals = coeffs.jump(nodes, np.broadcast_to(row, (len(nodes), row.size)))
        out[i] = weights @ np.sum(vals**2, axis=1)
    return out


def jump_difference_sq(coeffs: CoefficientSet, measure: MarkMeasure, z, w, order: int = 8) -> np.ndarray:
    """``int ||f(u, z) - f(u, w)||^2 beta(du)`` for each row pair (mark quadrature)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    nodes, weights = measure.quadrature(order)
    out = np.empty(len(z))
    for i in range(len(z)):
        zi = np.broadcast_to(z[i], (len(nodes), z.shape[1]))
        wi = np.broadcast_to(w[i], (len(nodes), w.shape[1]))
        diff = coeffs.jump(nodes, zi) - coeffs.jump(nodes, wi)
        out[i] = weights @ np.sum(diff**2, axis=1)
    return out


@dataclass
class CoefficientReport:
    drift_ratio: float
    jump_ratio: float
    growth_ratio: float
    growth_constant: float
    passed: bool
    witness: tuple | None = None
    failures: list = field(default_factory=list)


def validate_coefficients(coeffs: CoefficientSet, measure: MarkMeasure, probes,
                          rtol: float = 1e-9, raise_on_failure: bool = True) -> CoefficientReport:
    """Probe the Lipschitz constants ``L_F``, ``L_f`` and the linear-growth
    bound ``int ||f(u,z)||^2 beta(du) <= K (1 + ||z||^2)`` with
    ``K = 2 max(L_f, int ||f(u,0)||^2 beta)``.

    ``probes`` is a sequence of state pairs ``(z, z')``.
    """
    pairs = [(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)) for a, b in probes]
    if len(pairs) < 10:
        raise ValueError("need at least 10 probe pairs")
    Z = np.stack([p[0] for p in pairs])
    W = np.stack([p[1] for p in pairs])
    dist2 = np.sum((Z - W) ** 2, axis=1)
    ok = dist2 > 0
    dF = np.sum((coeffs.drift(Z) - coeffs.drift(W)) ** 2, axis=1)
    df = jump_difference_sq(coeffs, measure, Z, W)
    rF = np.where(ok, dF / np.where(ok, dist2, 1.0), 0.0)
    rf = np.where(ok, df / np.where(ok, dist2, 1.0), 0.0)

    K = coeffs.growth_constant
    states = np.concatenate([Z, W])
    energy = jump_sq_mean(coeffs, measure, states)
    envelope = K * (1.0 + np.sum(states**2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = np.where(envelope > 0, energy / envelope, np.where(energy > 0, np.inf, 0.0))

    failures, witness = [], None
    tol = 1.0 + rtol
    if rF.max() > coeffs.lip_drift * tol + rtol:
        i = int(rF.argmax())
        failures.append(f"L_F exceeded: ratio {rF[i]:.6g} > {coeffs.lip_drift:.6g}")
        witness = witness or (Z[i], W[i])
    if rf.max() > coeffs.lip_jump * tol + rtol:
        i = int(rf.argmax())
        failures.append(f"L_f exceeded: ratio {rf[i]:.6g} > {coeffs.lip_jump:.6g}")
        witness = witness or (Z[i], W[i])
    if growth.max() > tol:
        i = int(growth.argmax())
        failures.append(f"growth bound exceeded at state {states[i].tolist()}")
        witness = witness or (states[i], states[i])
    report = CoefficientReport(float(rF.max()), float(rf.max()), float(growth.max()), K,
                               not failures, witness, failures)
    if failures and raise_on_failure:
        a, b = witness
        raise CoefficientValidationError(
            "; ".join(failures) + f" (witness pair {a.tolist()} / {b.tolist()})", report
        )
    return report


# ---------------------------------------------------------------------------
# grids and paths


@dataclass(frozen=True)
class SimulationGrid:
    T: float
    steps: int = 1000

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= k <= self.steps:
            raise ValueError(f"time {t} is not a grid point of {self}")
        return k


@dataclass
class MildPath:
    times: np.ndarray
    states: np.ndarray  # (K+1, N)
    train: JumpTrain
    scheme: str = "mild"


@dataclass
class PathEnsemble:
    times: np.ndarray  # recorded times
    states: np.ndarray  # (P, R, N)
    stream_ids: np.ndarray
    scheme: str = "mild"

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]


def scheme_tag(n) -> str:
    return "mild" if n is None else f"yosida{{{n}}}"


@dataclass(frozen=True)
class SPDEModel:
    """Generator, coefficients and jump intensity of one equation."""

    generator: DiagonalGenerator
    coefficients: CoefficientSet
    measure: MarkMeasure

    @property
    def n_modes(self) -> int:
        return self.generator.n_modes


def _jump_schedule(batch_times, grid: SimulationGrid):
    """Step index and in-step offset of each jump, plus a step-sorted order."""
    dt = grid.dt
    live = np.flatnonzero(batch_times <= grid.T * (1 + 1e-14))
    t = batch_times[live]
    k = np.clip(np.ceil(t / dt).astype(np.int64) - 1, 0, grid.steps - 1)
    offset = np.clip(t - k * dt, np.nextafter(0.0, 1.0), dt)
    order = np.argsort(k, kind="stable")
    k_sorted = k[order]
    bounds = np.searchsorted(k_sorted, np.arange(grid.steps + 1))
    return live[order], offset[order], bounds


def iterate_scheme(A: DiagonalGenerator, coeffs: CoefficientSet, grid: SimulationGrid, x0,
                   batch_times, batch_marks, batch_path, n=None, first_step: int = 0):
    """Yield ``X_{t_k}`` for ``k = 0..steps`` for a batch of paths.

    ``x0`` has shape ``(P, N)``; the jump arrays are flattened jump-wise with
    ``batch_path`` giving the row each jump belongs to. With ``n`` set, the
    Yosida-regularised scheme is run (``x0`` is regularised here).
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    a = A.eigenvalues
    if n is None:
        reg = None
    else:
        reg = yosida_multiplier(A, n)
        x = reg * x
    dt = grid.dt
    Sdt = np.exp(dt * a)
    W = convolution_weight(A, dt)
    order, offsets, bounds = _jump_schedule(np.asarray(batch_times), grid)
    marks = np.asarray(batch_marks)[order]
    paths = np.asarray(batch_path)[order]
    kernels = np.exp(np.outer(dt - offsets, a))
    _guard(x, first_step)
    yield x
    for k in range(grid.steps):
        drift = coeffs.drift(x) - coeffs.compensator_mean(x)
        if reg is not None:
            drift = reg * drift
        new = Sdt * x + W * drift
        lo, hi = bounds[k], bounds[k + 1]
        if hi > lo:
            p = paths[lo:hi]
            jumps = coeffs.jump(marks[lo:hi], x[p])
            if reg is not None:
                jumps = reg * jumps
            np.add.at(new, p, kernels[lo:hi] * jumps)
        x = new
        _guard(x, first_step + k + 1)
        yield x


def _guard(x, step):
    big = np.abs(x).max(initial=0.0)
    if big > DIVERGENCE_THRESHOLD or not math.isfinite(big):
        norms = np.linalg.norm(x, axis=1)
        bad = int(np.flatnonzero(~(norms <= DIVERGENCE_THRESHOLD))[0])
        raise DivergenceError(
            f"state norm {norms[bad]:.3g} exceeds {DIVERGENCE_THRESHOLD:g} at step {step}, path row {bad}",
            step=step, path=bad,
        )


def step_mild(A: DiagonalGenerator, coeffs: CoefficientSet, x, jumps, dt: float,
              measure: MarkMeasure | None = None, n=None) -> np.ndarray:
    """One exponential Euler step from state ``x`` over ``(0, dt]``.

    ``jumps`` is a sequence of ``(offset, mark)`` pairs with offsets in ``(0, dt]``.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    offs = np.array([j[0] for j in jumps], dtype=np.float64)
    dim = measure.dim if measure is not None else 1
    marks = (np.array([np.atleast_1d(j[1]) for j in jumps], dtype=np.float64).reshape(len(offs), -1)
             if len(offs) else np.empty((0, dim)))
    if np.any(offs <= 0) or np.any(offs > dt):
        raise ValueError("jump offsets must lie in (0, dt]")
    grid = SimulationGrid(dt, 1)
    it = iterate_scheme(A, coeffs, grid, x, offs, marks, np.zeros(len(offs), dtype=np.int64), n=n)
    next(it)
    return next(it)[0]


def simulate_mild_path(A, coeffs, measure, grid: SimulationGrid, xi, rng, n=None) -> MildPath:
    """Single path of the exponential scheme driven by one sampled train."""
    if isinstance(rng, JumpTrain):
        train = rng
    else:
        train = sample_jump_train(measure, grid.T, rng)
    xi = np.asarray(xi, dtype=np.float64).reshape(1, -1)
    states = np.stack([s[0].copy() for s in iterate_scheme(
        A, coeffs, grid, xi, train.times, train.marks, np.zeros(train.count, dtype=np.int64), n=n)])
    return MildPath(grid.times, states, train, scheme_tag(n))


def simulate_yosida_path(A, coeffs, measure, grid, xi, rng, n) -> MildPath:
    """Path of the ``R_n``-regularised equation; the same ``rng`` reproduces the
    jump train of the corresponding mild path."""
    if not n > A.growth_rate:
        raise ValueError(f"n={n} must exceed the growth rate {A.growth_rate}")
    return simulate_mild_path(A, coeffs, measure, grid, xi, rng, n=n)


def _initial_block(xi, n_rows, n_modes):
    xi = np.asarray(xi, dtype=np.float64)
    if xi.ndim == 1:
        return np.broadcast_to(xi, (n_rows, n_modes)).copy()
    return xi.copy()


def _record_indices(grid, record):
    if record is None:
        return np.arange(grid.steps + 1)
    if isinstance(record, int):
        idx = np.arange(0, grid.steps + 1, record)
        if idx[-1] != grid.steps:
            idx = np.append(idx, grid.steps)
        return idx
    return np.asarray(sorted(set(int(i) for i in record)), dtype=np.int64)


def simulate_ensemble(A, coeffs, measure, grid: SimulationGrid, xi, seed: int, paths: int | None = None,
                      stream_ids=None, record=None, n=None, n_jobs: int = 1) -> PathEnsemble:
    """Independent paths, path ``i`` driven by ``RngStream(seed, stream_ids[i])``.

    ``xi`` is one initial state or one per path. ``record`` selects grid
    indices to keep (``None`` keeps all, an int is a stride).
    """
    if stream_ids is None:
        stream_ids = np.arange(paths)
    stream_ids = np.asarray(stream_ids, dtype=np.uint64)
    xi = np.asarray(xi, dtype=np.float64)
    rec = _record_indices(grid, record)
    N = A.n_modes
    row_of = {int(s): i for i, s in enumerate(stream_ids)} if xi.ndim == 2 else None

    def run(ids):
        batch = sample_train_batch(measure, grid.T, seed, ids)
        x0 = xi[[row_of[int(s)] for s in ids]] if row_of is not None else _initial_block(xi, ids.size, N)
        out = np.empty((ids.size, rec.size, N))
        j = 0
        for k, x in enumerate(iterate_scheme(A, coeffs, grid, x0, batch.times, batch.marks, batch.path, n=n)):
            if j < rec.size and rec[j] == k:
                out[:, j, :] = x
                j += 1
        return out

    states = map_streams(run, stream_ids, n_jobs)
    return PathEnsemble(grid.times[rec], states, stream_ids, scheme_tag(n))


def st2_norm(ensemble) -> float:
    """``(E sup_k ||X_{t_k}||^2)^{1/2}`` over an ensemble of paths on a common grid."""
    if isinstance(ensemble, PathEnsemble):
        states = ensemble.states
    elif isinstance(ensemble, MildPath):
        states = ensemble.states[None]
    elif isinstance(ensemble, (list, tuple)) and ensemble and isinstance(ensemble[0], MildPath):
        states = np.stack([p.states for p in ensemble])
    else:
        states = np.asarray(ensemble, dtype=np.float64)
    if states.size == 0:
        raise ValueError("empty ensemble")
    sup = np.max(np.sum(states**2, axis=-1), axis=1)
    return float(np.sqrt(sup.mean()))


@dataclass
class GapCurve:
    """Per-path ``sup_k ||X^n_{t_k} - X_{t_k}||^2`` for each ``n`` under shared noise."""

    n_list: np.ndarray
    per_path: np.ndarray  # (P, len(n_list))

    @property
    def mean(self) -> np.ndarray:
        return self.per_path.mean(axis=0)

    @property
    def stderr(self) -> np.ndarray:
        P = self.per_path.shape[0]
        if P < 2:
            return np.zeros(self.n_list.size)
        return self.per_path.std(axis=0, ddof=1) / math.sqrt(P)

    def decrease_margins(self) -> np.ndarray:
        """Paired mean drop between consecutive ``n`` divided by 3 standard errors
        of the paired difference (values > 1 mean a strict drop beyond the band)."""
        d = self.per_path[:, :-1] - self.per_path[:, 1:]
        P = d.shape[0]
        se = d.std(axis=0, ddof=1) / math.sqrt(P) if P > 1 else np.zeros(d.shape[1])
        m = d.mean(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, m / (3 * se), np.where(m > 0, np.inf, 0.0))

    def strictly_decreasing(self) -> bool:
        return bool(np.all(self.decrease_margins() > 1.0))


def yosida_gap_estimate(A, coeffs, measure, grid, xi, paths: int, n_list, seed: int = 0,
                        n_jobs: int = 1) -> GapCurve:
    """Monte Carlo ``E sup_k ||X^n_{t_k} - X_{t_k}||^2`` with each path's noise
    shared by the mild run and every Yosida run."""
    n_list = np.asarray(n_list)
    if np.any(np.diff(n_list) <= 0):
        raise ValueError("n_list must be increasing")
    if np.any(n_list <= A.growth_rate):
        raise ValueError("every n must exceed the growth rate")
    N = A.n_modes

    def run(ids):
        batch = sample_train_batch(measure, grid.T, seed, ids)
        x0 = _initial_block(xi, ids.size, N)
        args = (batch.times, batch.marks, batch.path)
        base = iterate_scheme(A, coeffs, grid, x0, *args)
        regs = [iterate_scheme(A, coeffs, grid, x0, *args, n=float(n)) for n in n_list]
        best = np.zeros((ids.size, n_list.size))
        for states in zip(base, *regs):
            x = states[0]
            for j, y in enumerate(states[1:]):
                np.maximum(best[:, j], np.sum((y - x) ** 2, axis=1), out=best[:, j])
        return best

    return GapCurve(n_list, map_streams(run, np.arange(paths), n_jobs))


def moment_oracle(model: SPDEModel, xi, t):
    """Closed-form per-mode mean and second moment at time(s) ``t``.

    Available for the ``linear`` and ``additive`` presets, where the moment
    equations decouple per mode: ``dm/dt = (a + c) m`` and
    ``dE[x^2]/dt = 2 (a + c) E[x^2] + sigma(E[x^2])`` with ``sigma`` the jump
    energy. Returns ``None`` for other coefficients.
    """
    coeffs = model.coefficients
    a = model.generator.eigenvalues
    c = float(coeffs.params.get("drift_scale", 0.0))
    xi = np.asarray(xi, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)[..., None]
    rate = a + c
    mean = np.exp(rate * t) * xi
    if coeffs.name == "linear":
        g = coeffs.params["jump_scale"]
        m2 = float(model.measure.second_moment_matrix()[0, 0])
        second = np.exp((2 * rate + g * g * m2) * t) * xi**2
    elif coeffs.name == "additive":
        M = np.asarray(coeffs.params["mark_map"])
        s = np.diag(M @ model.measure.second_moment_matrix() @ M.T)
        lam = 2 * rate
        safe = np.where(lam == 0, 1.0, lam)
        growth = np.where(lam == 0, t, np.expm1(lam * t) / safe)
        second = np.exp(lam * t) * xi**2 + s * growth
    else:
        return None
    return mean, second


def stationary_second_moment(model: SPDEModel):
    """Per-mode stationary ``E[x_k^2]`` from the moment equations, or ``None``."""
    coeffs = model.coefficients
    rate = model.generator.eigenvalues + float(coeffs.params.get("drift_scale", 0.0))
    if np.any(rate >= 0):
        return None
    if coeffs.name == "linear":
        return np.zeros_like(rate)
    if coeffs.name == "additive":
        M = np.asarray(coeffs.params["mark_map"])
        s = np.diag(M @ model.measure.second_moment_matrix() @ M.T)
        return s / (-2 * rate)
    return None

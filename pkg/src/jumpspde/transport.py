"""Empirical Wasserstein-2 distances and contraction / invariant-measure checks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrator import SPDEModel, SimulationGrid, iterate_scheme, simulate_ensemble
from .noise import RngStream, sample_jump_train
from .stability import certified_rate, fit_decay_rate

EXACT_LIMIT = 1024
SLACKNESS_TOL = 1e-9


@dataclass
class EmpiricalMeasure:
    """Equally weighted point cloud ``(n, N)``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 1:
            raise ValueError("an empirical measure needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def second_moment(self) -> float:
        return float(np.mean(np.sum(self.points**2, axis=1)))


def _points(mu) -> np.ndarray:
    return mu.points if isinstance(mu, EmpiricalMeasure) else EmpiricalMeasure(mu).points


@dataclass
class CouplingResult:
    cost: float  # (1/n) sum ||x_i - y_{assignment[i]}||^2
    assignment: np.ndarray
    row_potential: np.ndarray
    col_potential: np.ndarray
    slackness_residual: float

    @property
    def distance(self) -> float:
        return math.sqrt(self.cost)


def solve_assignment(C: np.ndarray):
    """Minimum-cost perfect matching by shortest augmenting paths.

    Rows are inserted one at a time; each insertion runs a Dijkstra-like
    search on reduced costs and then augments. Returns ``(assignment, u, v)``
    with ``assignment[i]`` the column of row ``i`` and dual potentials
    satisfying ``C[i, j] - u[i] - v[j] >= 0`` with equality on the matching.
    """
    C = np.asarray(C, dtype=np.float64)
    n = C.shape[0]
    if C.shape != (n, n):
        raise ValueError("cost matrix must be square")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = 1-based row on column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = C[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    assignment = np.empty(n, dtype=np.int64)
    assignment[match[1:] - 1] = np.arange(n)
    return assignment, u[1:], v[1:]


def wasserstein2_exact(mu, nu) -> CouplingResult:
    """Exact ``W_2^2`` between equal-size empirical measures (assignment problem)."""
    x, y = _points(mu), _points(nu)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"sizes differ ({x.shape[0]} vs {y.shape[0]}); resample first")
    if x.shape[1] != y.shape[1]:
        raise ValueError("point dimensions differ")
    if x.shape[0] > EXACT_LIMIT:
        raise ValueError(f"exact solver is limited to n <= {EXACT_LIMIT}")
    C = np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)
    assignment, u, v = solve_assignment(C)
    reduced = C - u[:, None] - v[None, :]
    on = reduced[np.arange(len(x)), assignment]
    scale = max(1.0, float(C.max()))
    residual = max(float(-reduced.min()), float(np.abs(on).max())) / scale
    if residual > SLACKNESS_TOL:
        raise ArithmeticError(f"complementary slackness residual {residual:.3g} too large")
    cost = float(np.mean(np.sum((x - y[assignment]) ** 2, axis=1)))
    return CouplingResult(cost, assignment, u, v, residual)


def wasserstein2_1d(a, b) -> float:
    """``W_2`` between equal-size samples on the line via sorted matching."""
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size != b.size:
        raise ValueError("samples must have equal length")
    return float(math.sqrt(np.mean((a - b) ** 2)))


@dataclass
class SlicedResult:
    value: float
    band: float
    per_direction: np.ndarray  # squared 1-d distances


def sliced_w2(mu, nu, directions: int, rng) -> SlicedResult:
    """Sliced ``W_2`` over random unit directions, with a direction-resampling band."""
    if directions < 16:
        raise ValueError("use at least 16 directions")
    x, y = _points(mu), _points(nu)
    if x.shape != y.shape:
        raise ValueError("clouds must have equal shape")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    theta = gen.standard_normal((directions, x.shape[1]))
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    px = np.sort(x @ theta.T, axis=0)
    py = np.sort(y @ theta.T, axis=0)
    sq = np.mean((px - py) ** 2, axis=0)
    m = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(directions))
    value = math.sqrt(m)
    return SlicedResult(value, math.sqrt(m + 3 * se) - value, sq)


def w2(mu, nu, seed: int = 0) -> float:
    """Best available ``W_2``: sorting in one dimension, assignment up to
    ``EXACT_LIMIT`` points, otherwise sliced (a lower bound)."""
    x, y = _points(mu), _points(nu)
    if x.shape[1] == 1:
        return wasserstein2_1d(x[:, 0], y[:, 0])
    if x.shape[0] <= EXACT_LIMIT:
        return wasserstein2_exact(x, y).distance
    return sliced_w2(x, y, 256, RngStream(seed, 0)).value


# ---------------------------------------------------------------------------
# contraction


def _draw(sampler, n, N, stream):
    if callable(sampler):
        pts = np.asarray(sampler(stream.generator(), n), dtype=np.float64)
        return pts.reshape(n, N)
    return np.broadcast_to(np.asarray(sampler, dtype=np.float64), (n, N)).copy()


@dataclass
class ContractionReport:
    times: np.ndarray
    initial_distance: float
    epsilon: float
    independent: np.ndarray
    bound: np.ndarray
    band: np.ndarray
    coupled: np.ndarray
    passed: np.ndarray
    coupled_rate: float

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))


def contraction_estimate(model: SPDEModel, rho, rho_tilde, t_list, n: int, dt: float, seed: int = 0,
                         n_jobs: int = 1) -> ContractionReport:
    """Forward ``n`` points from each initial law and compare ``W_2`` to
    ``W_2(rho, rho~) e^{-eps t / 2}``.

    ``rho`` / ``rho_tilde`` are fixed states (Dirac laws) or callables
    ``(generator, size) -> (size, N)``. Independent noise is used across all
    points; the synchronously coupled variant drives point ``i`` of both
    clouds with the same train and reports the root-mean-square pair distance.
    """
    A, coeffs, measure = model.generator, model.coefficients, model.measure
    alpha, eps = certified_rate(A, coeffs)
    if eps <= 0:
        raise ValueError("contraction requires a certified eps > 0")
    t_list = np.asarray(t_list, dtype=np.float64)
    T = float(t_list.max())
    if T <= 0:
        raise ValueError("need a positive time")
    steps = max(1, int(round(T / dt)))
    grid = SimulationGrid(T, steps)
    rec = [grid.index_of(t) for t in t_list]
    N = A.n_modes
    top = 2**64 - 1
    x0 = _draw(rho, n, N, RngStream(seed, top))
    y0 = _draw(rho_tilde, n, N, RngStream(seed, top - 1))
    x0r = _draw(rho, n, N, RngStream(seed, top - 2))
    y0r = _draw(rho_tilde, n, N, RngStream(seed, top - 3))

    def run(x_init, ids):
        return simulate_ensemble(A, coeffs, measure, grid, x_init, seed, stream_ids=ids,
                                 record=rec, n_jobs=n_jobs).states

    ids = np.arange(n)
    X = run(x0, ids)
    Y = run(y0, ids + n)
    Yc = run(y0, ids)
    Xr = run(x0r, ids + 2 * n)
    Yr = run(y0r, ids + 3 * n)

    w0 = w2(x0, y0, seed)
    indep, band, coupled = [], [], []
    for j in range(len(t_list)):
        indep.append(w2(X[:, j], Y[:, j], seed))
        band.append(w2(X[:, j], Xr[:, j], seed) + w2(Y[:, j], Yr[:, j], seed))
        coupled.append(math.sqrt(np.mean(np.sum((X[:, j] - Yc[:, j]) ** 2, axis=1))))
    indep, band, coupled = map(np.asarray, (indep, band, coupled))
    bound = w0 * np.exp(-eps * t_list / 2)
    passed = indep <= bound + band
    rate = fit_decay_rate(t_list, coupled)
    return ContractionReport(t_list, w0, eps, indep, bound, band, coupled, passed, rate)


# ---------------------------------------------------------------------------
# invariant measure


@dataclass
class InvariantSample:
    measure: EmpiricalMeasure
    burn_in: float
    gap: float
    stationarity_distance: float
    self_distance: float

    @property
    def stationary(self) -> bool:
        return self.stationarity_distance <= self.self_distance


def invariant_measure_sampler(model: SPDEModel, samples: int, seed: int = 0, burn_in: float | None = None,
                              gap: float | None = None, substeps: int = 10, x0=None) -> InvariantSample:
    """Thinned samples from one long trajectory after a burn-in.

    Defaults follow the certified contraction clock: ``burn_in = 10/eps`` and
    ``gap = 1/eps``. Stationarity witness: ``W_2`` between the samples and
    their push-forward by one gap is compared with the distance between the
    first and second halves of the chain, which are nearly independent draws
    after thinning.
    """
    A, coeffs, measure = model.generator, model.coefficients, model.measure
    alpha, eps = certified_rate(A, coeffs)
    if eps <= 0:
        raise ValueError("invariant measure sampling requires a certified eps > 0")
    burn_in = 10.0 / eps if burn_in is None else float(burn_in)
    gap = 1.0 / eps if gap is None else float(gap)
    if samples < 2:
        raise ValueError("need at least two samples")
    dt = gap / substeps
    burn_steps = int(math.ceil(burn_in / dt - 1e-9))
    steps = burn_steps + (samples - 1) * substeps
    grid = SimulationGrid(steps * dt, steps)
    N = A.n_modes
    x = np.zeros((1, N)) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(1, N)
    train = sample_jump_train(measure, grid.T, RngStream(seed, 0))
    keep = np.empty((samples, N))
    j = 0
    for k, state in enumerate(iterate_scheme(A, coeffs, grid, x, train.times, train.marks,
                                             np.zeros(train.count, dtype=np.int64))):
        if k >= burn_steps and (k - burn_steps) % substeps == 0:
            keep[j] = state[0]
            j += 1
    pushed = simulate_ensemble(A, coeffs, measure, SimulationGrid(gap, substeps), keep, seed,
                               stream_ids=np.arange(1, samples + 1), record=[substeps]).states[:, 0]
    half = samples // 2
    self_d = w2(keep[:half], keep[half:2 * half], seed)
    stat_d = w2(keep, pushed, seed)
    return InvariantSample(EmpiricalMeasure(keep), burn_in, gap, stat_d, self_d)


@dataclass
class InvariantContraction:
    times: np.ndarray
    distance: np.ndarray
    fitted_rate: float


def invariant_contraction(model: SPDEModel, x, reference, t_list, dt: float, seed: int = 0,
                          n_jobs: int = 1) -> InvariantContraction:
    """``W_2(p_t^* delta_x, pi_hat)`` for ``t`` in ``t_list`` against a sample of the
    invariant law; the cloud has the size of ``reference``."""
    ref = _points(reference)
    n, N = ref.shape
    t_list = np.asarray(t_list, dtype=np.float64)
    T = float(t_list.max())
    grid = SimulationGrid(T, max(1, int(round(T / dt))))
    rec = [grid.index_of(t) for t in t_list]
    ens = simulate_ensemble(model.generator, model.coefficients, model.measure, grid,
                            np.asarray(x, dtype=np.float64), seed, stream_ids=np.arange(n) + 7 * n,
                            record=rec, n_jobs=n_jobs)
    dist = np.array([w2(ens.states[:, j], ref, seed) for j in range(len(t_list))])
    return InvariantContraction(t_list, dist, fit_decay_rate(t_list, dist))

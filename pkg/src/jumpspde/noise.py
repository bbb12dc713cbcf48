"""Finite-activity Poisson random measures and compensated jump integrals.

Jump trains are sampled exactly: a Poisson number of jumps, uniform jump
times, i.i.d. marks. Every path owns a counter-based Philox stream keyed by
``(seed, stream)`` so ensembles are reproducible and can be split across
workers without changing a single draw.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .operators import DiagonalGenerator, convolution_weight


class NonFiniteIntegrandError(FloatingPointError):
    """An integrand produced NaN or inf at some (time, mark) site."""


# ---------------------------------------------------------------------------
# random streams


@dataclass(frozen=True)
class RngStream:
    """Philox stream identified by a 64-bit seed and a 64-bit stream id."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must fit in 64 unsigned bits, got {v}")

    def generator(self) -> np.random.Generator:
        key = int(self.seed) | (int(self.stream) << 64)
        return np.random.Generator(np.random.Philox(key=key))


class _StreamCursor:
    """One reusable Philox generator re-keyed per stream; draws are identical
    to a freshly built ``RngStream(seed, stream).generator()``."""

    _MASK = 2**64 - 1

    def __init__(self):
        self._bits = np.random.Philox(key=0)
        self._gen = np.random.Generator(self._bits)

    def at(self, seed: int, stream: int) -> np.random.Generator:
        self._bits.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.zeros(4, dtype=np.uint64),
                "key": np.array([int(seed) & self._MASK, int(stream) & self._MASK], dtype=np.uint64),
            },
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._gen


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def map_streams(fn, stream_ids, n_jobs: int = 1):
    """Apply ``fn`` to contiguous chunks of ``stream_ids`` and concatenate.

    ``fn(chunk)`` must return an array (or tuple of arrays) with the path axis
    first. Chunks are joined in stream order, so the result does not depend
    on ``n_jobs``.
    """
    stream_ids = np.asarray(stream_ids, dtype=np.uint64)
    n_jobs = max(1, int(n_jobs))
    if n_jobs == 1 or stream_ids.size < 2 * n_jobs:
        return fn(stream_ids)
    chunks = np.array_split(stream_ids, n_jobs)
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        parts = list(pool.map(fn, chunks))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p, axis=0) for p in zip(*parts))
    return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------------------
# mark measures


class MarkMeasure:
    """Finite jump intensity ``beta = rate * (law of the marks)`` on R^d.

    Subclasses supply the mark law; moments are reported with the rate folded
    in, i.e. ``moment(p) = int ||u||^p beta(du)``.
    """

    family = "abstract"

    def __init__(self, rate: float, dim: int):
        rate = float(rate)
        if not (rate >= 0 and math.isfinite(rate)):
            raise ValueError(f"rate must be finite and nonnegative, got {rate}")
        self.rate = rate
        self.dim = int(dim)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def quadrature(self, order: int = 8):
        """Nodes ``(m, d)`` and weights ``(m,)`` with ``sum w g(u) ~ int g d beta``."""
        raise NotImplementedError

    def _law_mean(self):
        raise NotImplementedError

    def _law_second(self):
        raise NotImplementedError

    def _law_norm_moment(self, p):
        raise NotImplementedError

    def mean_mark(self) -> np.ndarray:
        return self.rate * self._law_mean()

    def second_moment_matrix(self) -> np.ndarray:
        return self.rate * self._law_second()

    def moment(self, p: int) -> float:
        if p not in (1, 2, 4):
            raise ValueError("moments are available for p in {1, 2, 4}")
        return self.rate * float(self._law_norm_moment(p))

    def integrate(self, g, order: int = 8):
        """``int g(u) beta(du)`` for vectorised ``g: (m, d) -> (m, ...)``."""
        nodes, weights = self.quadrature(order)
        vals = np.asarray(g(nodes), dtype=np.float64)
        return np.tensordot(weights, vals, axes=(0, 0))


class AtomMarks(MarkMeasure):
    """Marks drawn from finitely many atoms with given probabilities."""

    family = "atoms"

    def __init__(self, rate, points, weights=None):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        super().__init__(rate, pts.shape[1])
        if weights is None:
            weights = np.full(len(pts), 1.0 / len(pts))
        w = np.array(weights, dtype=np.float64)
        if w.shape != (len(pts),) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("atom weights must be nonnegative, one per point")
        self.points = pts
        self.probs = w / w.sum()

    def sample(self, rng, size):
        idx = rng.choice(len(self.points), size=size, p=self.probs)
        return self.points[idx]

    def quadrature(self, order=8):
        return self.points, self.rate * self.probs

    def _law_mean(self):
        return self.probs @ self.points

    def _law_second(self):
        return (self.points * self.probs[:, None]).T @ self.points

    def _law_norm_moment(self, p):
        return self.probs @ np.linalg.norm(self.points, axis=1) ** p


def _tensor_rule(nodes_1d, weights_1d, dim):
    grids = np.meshgrid(*([nodes_1d] * dim), indexing="ij")
    wgrids = np.meshgrid(*([weights_1d] * dim), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=1)
    weights = np.prod(np.stack([w.reshape(-1) for w in wgrids], axis=1), axis=1)
    return nodes, weights


class GaussianMarks(MarkMeasure):
    """Gaussian marks with diagonal covariance."""

    family = "gaussian"

    def __init__(self, rate, mean, var):
        mean = np.atleast_1d(np.array(mean, dtype=np.float64))
        var = np.broadcast_to(np.array(var, dtype=np.float64), mean.shape).copy()
        if np.any(var < 0):
            raise ValueError("variances must be nonnegative")
        super().__init__(rate, mean.size)
        self.mean, self.var = mean, var

    def sample(self, rng, size):
        return self.mean + np.sqrt(self.var) * rng.standard_normal((size, self.dim))

    def quadrature(self, order=8):
        x, w = hermegauss(order)
        nodes, weights = _tensor_rule(x, w / w.sum(), self.dim)
        return self.mean + np.sqrt(self.var) * nodes, self.rate * weights

    def _law_mean(self):
        return self.mean.copy()

    def _law_second(self):
        return np.outer(self.mean, self.mean) + np.diag(self.var)

    def _law_norm_moment(self, p):
        m, s = self.mean, self.var
        if p == 2:
            return np.sum(m**2 + s)
        if p == 4:
            var_sq = 4 * m**2 * s + 2 * s**2
            return var_sq.sum() + np.sum(m**2 + s) ** 2
        if self.dim == 1:
            sd = math.sqrt(s[0])
            mu = m[0]
            if sd == 0:
                return abs(mu)
            z = mu / sd
            return sd * math.sqrt(2 / math.pi) * math.exp(-0.5 * z * z) + mu * math.erf(z / math.sqrt(2))
        nodes, weights = self.quadrature(24)
        return weights @ np.linalg.norm(nodes, axis=1) / self.rate if self.rate else 0.0


class UniformBoxMarks(MarkMeasure):
    """Marks uniform on the box ``prod_i [low_i, high_i]``."""

    family = "uniform_box"

    def __init__(self, rate, low, high):
        low = np.atleast_1d(np.array(low, dtype=np.float64))
        high = np.atleast_1d(np.array(high, dtype=np.float64))
        if low.shape != high.shape or np.any(high <= low):
            raise ValueError("need low < high componentwise")
        super().__init__(rate, low.size)
        self.low, self.high = low, high

    def sample(self, rng, size):
        return self.low + (self.high - self.low) * rng.random((size, self.dim))

    def quadrature(self, order=8):
        x, w = leggauss(order)
        nodes, weights = _tensor_rule(x, w / 2.0, self.dim)
        half = (self.high - self.low) / 2
        return self.low + half * (nodes + 1.0), self.rate * weights

    def _coord_moments(self):
        lo, hi = self.low, self.high
        m1 = (lo + hi) / 2
        m2 = (lo**2 + lo * hi + hi**2) / 3
        m4 = (hi**5 - lo**5) / (5 * (hi - lo))
        return m1, m2, m4

    def _law_mean(self):
        return self._coord_moments()[0]

    def _law_second(self):
        m1, m2, _ = self._coord_moments()
        out = np.outer(m1, m1)
        np.fill_diagonal(out, m2)
        return out

    def _law_norm_moment(self, p):
        _, m2, m4 = self._coord_moments()
        if p == 2:
            return m2.sum()
        if p == 4:
            return m4.sum() + m2.sum() ** 2 - np.sum(m2**2)
        if self.dim == 1:
            lo, hi = self.low[0], self.high[0]
            return (hi * abs(hi) - lo * abs(lo)) / (2 * (hi - lo))
        nodes, weights = self.quadrature(24)
        return weights @ np.linalg.norm(nodes, axis=1) / self.rate if self.rate else 0.0


# ---------------------------------------------------------------------------
# jump trains


@dataclass
class JumpTrain:
    horizon: float
    times: np.ndarray  # (m,), strictly increasing in (0, horizon]
    marks: np.ndarray  # (m, d)

    @property
    def count(self) -> int:
        return self.times.size

    def restrict(self, t: float) -> "JumpTrain":
        keep = self.times <= t
        return JumpTrain(t, self.times[keep], self.marks[keep])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.float64(self.horizon).tobytes())
        h.update(np.ascontiguousarray(self.times).tobytes())
        h.update(np.ascontiguousarray(self.marks).tobytes())
        return h.hexdigest()


def sample_jump_train(measure: MarkMeasure, T: float, rng) -> JumpTrain:
    """Exact sample of the jumps of ``N`` on ``(0, T] x R^d``."""
    if not T > 0:
        raise ValueError("horizon must be positive")
    gen = _as_generator(rng)
    count = int(gen.poisson(measure.rate * T)) if measure.rate > 0 else 0
    # T - U with U uniform on [0, T) lands in (0, T]
    times = np.sort(T - T * gen.random(count))
    marks = measure.sample(gen, count) if count else np.empty((0, measure.dim))
    return JumpTrain(float(T), times, marks)


@dataclass
class TrainBatch:
    """Jump trains of many paths, flattened jump-wise.

    ``path`` holds the row index (0..n_paths-1) of each jump; jumps of one
    path are contiguous and in time order.
    """

    horizon: float
    stream_ids: np.ndarray
    counts: np.ndarray
    times: np.ndarray
    marks: np.ndarray
    path: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.stream_ids.size

    def train(self, i: int) -> JumpTrain:
        start = int(self.counts[:i].sum())
        stop = start + int(self.counts[i])
        return JumpTrain(self.horizon, self.times[start:stop], self.marks[start:stop])


def sample_train_batch(measure: MarkMeasure, T: float, seed: int, stream_ids) -> TrainBatch:
    """Trains for each stream id; path ``i`` is bit-identical to a single draw
    from ``RngStream(seed, stream_ids[i])``."""
    stream_ids = np.asarray(stream_ids, dtype=np.uint64).reshape(-1)
    if not T > 0:
        raise ValueError("horizon must be positive")
    RngStream(seed)  # range check
    cursor = _StreamCursor()
    mean_count = measure.rate * T
    times, marks, counts = [], [], np.zeros(stream_ids.size, dtype=np.int64)
    for i, sid in enumerate(stream_ids.tolist()):
        if mean_count <= 0:
            break
        gen = cursor.at(seed, sid)
        # same draw order as sample_jump_train
        c = int(gen.poisson(mean_count))
        counts[i] = c
        if c:
            times.append(np.sort(T - T * gen.random(c)))
            marks.append(measure.sample(gen, c))
    times = np.concatenate(times) if times else np.empty(0)
    marks = np.concatenate(marks) if marks else np.empty((0, measure.dim))
    path = np.repeat(np.arange(stream_ids.size), counts)
    return TrainBatch(float(T), stream_ids, counts, times, marks, path)


def concat_batches(batches) -> TrainBatch:
    batches = list(batches)
    offsets = np.cumsum([0] + [b.n_paths for b in batches[:-1]])
    return TrainBatch(
        batches[0].horizon,
        np.concatenate([b.stream_ids for b in batches]),
        np.concatenate([b.counts for b in batches]),
        np.concatenate([b.times for b in batches]),
        np.concatenate([b.marks for b in batches]),
        np.concatenate([b.path + o for b, o in zip(batches, offsets)]),
    )


# ---------------------------------------------------------------------------
# integrands


@dataclass
class Integrand:
    """Deterministic integrand ``f(s, u)`` with values in the state space.

    ``fn`` is vectorised: ``fn(s, u)`` with ``s`` of shape ``(m,)`` and ``u``
    of shape ``(m, d)`` returns ``(m, N)``. ``compensator(s, measure)`` and
    ``sq_moment(s, measure)`` give ``int f(s,u) beta(du)`` and
    ``int ||f(s,u)||^2 beta(du)`` in closed form when known; otherwise the
    mark integrals fall back to the measure's quadrature rule.
    """

    fn: Callable
    dim: int
    compensator: Callable | None = None
    sq_moment: Callable | None = None
    time_independent: bool = False

    def __call__(self, s, u):
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        u = np.asarray(u, dtype=np.float64).reshape(s.size, -1)
        out = np.asarray(self.fn(s, u), dtype=np.float64).reshape(s.size, self.dim)
        if not np.all(np.isfinite(out)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(out), axis=1))[0])
            raise NonFiniteIntegrandError(
                f"integrand is not finite at s={s[bad]!r}, u={u[bad].tolist()!r}"
            )
        return out

    def mean(self, s: float, measure: MarkMeasure, order: int = 8) -> np.ndarray:
        if self.compensator is not None:
            return np.asarray(self.compensator(s, measure), dtype=np.float64)
        nodes, weights = measure.quadrature(order)
        return weights @ self(np.full(len(nodes), s), nodes)

    def second_moment(self, s: float, measure: MarkMeasure, order: int = 8) -> float:
        if self.sq_moment is not None:
            return float(self.sq_moment(s, measure))
        nodes, weights = measure.quadrature(order)
        vals = self(np.full(len(nodes), s), nodes)
        return float(weights @ np.sum(vals**2, axis=1))

    @classmethod
    def zero(cls, dim: int) -> "Integrand":
        return cls(
            lambda s, u: np.zeros((s.size, dim)),
            dim,
            compensator=lambda s, m: np.zeros(dim),
            sq_moment=lambda s, m: 0.0,
            time_independent=True,
        )

    @classmethod
    def constant(cls, c) -> "Integrand":
        c = np.atleast_1d(np.asarray(c, dtype=np.float64))
        return cls(
            lambda s, u: np.broadcast_to(c, (s.size, c.size)),
            c.size,
            compensator=lambda s, m: m.rate * c,
            sq_moment=lambda s, m: m.rate * float(c @ c),
            time_independent=True,
        )

    @classmethod
    def mark_linear(cls, matrix, time_factor: Callable | None = None) -> "Integrand":
        """``f(s, u) = phi(s) * M u`` for an ``(N, d)`` matrix ``M``."""
        M = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        phi = time_factor if time_factor is not None else (lambda s: np.ones_like(s))

        def fn(s, u):
            return phi(s)[:, None] * (u @ M.T)

        def comp(s, m):
            return float(phi(np.atleast_1d(float(s)))[0]) * (M @ m.mean_mark())

        def sq(s, m):
            p = float(phi(np.atleast_1d(float(s)))[0])
            return p * p * float(np.trace(M @ m.second_moment_matrix() @ M.T))

        return cls(fn, M.shape[0], comp, sq, time_independent=time_factor is None)


def _midpoints(a, b, steps):
    h = (b - a) / steps
    return a + (np.arange(steps) + 0.5) * h, h


def compensator_convolution(A, f: Integrand, measure, t: float, quad_steps: int = 200):
    """``int_0^t S_{t-s} int f(s,u) beta(du) ds`` (``A = None`` means ``S = I``)."""
    if t <= 0:
        return np.zeros(f.dim)
    if f.time_independent:
        c = f.mean(0.0, measure)
        if A is None:
            return t * c
        return convolution_weight(A, t) * c
    s, h = _midpoints(0.0, t, quad_steps)
    cs = np.stack([f.mean(si, measure) for si in s])
    if A is not None:
        cs = np.exp(np.outer(t - s, A.eigenvalues)) * cs
    return h * cs.sum(axis=0)


def compensated_integral(f: Integrand, train: JumpTrain, measure, T: float, quad_steps: int = 200):
    """``int_0^T int f(s,u) q(ds,du)`` for one sampled train."""
    train = train.restrict(T)
    jumps = f(train.times, train.marks).sum(axis=0) if train.count else np.zeros(f.dim)
    return jumps - compensator_convolution(None, f, measure, T, quad_steps)


def convolved_integral(A: DiagonalGenerator, f: Integrand, train: JumpTrain, measure, t: float,
                       quad_steps: int = 200):
    """``int_0^t int S_{t-s} f(s,u) q(ds,du)`` for one sampled train."""
    if t > train.horizon * (1 + 1e-12):
        raise ValueError("t exceeds the train horizon")
    tr = train.restrict(t)
    if tr.count:
        kern = np.exp(np.outer(t - tr.times, A.eigenvalues))
        jumps = (kern * f(tr.times, tr.marks)).sum(axis=0)
    else:
        jumps = np.zeros(f.dim)
    return jumps - compensator_convolution(A, f, measure, t, quad_steps)


def convolved_integral_batch(A, f: Integrand, batch: TrainBatch, measure, eval_times,
                             quad_steps: int = 200) -> np.ndarray:
    """Values of the (convolved) compensated integral at ``eval_times`` for
    every path of ``batch``; shape ``(n_paths, len(eval_times), N)``.

    ``A = None`` gives the plain compensated integral.
    """
    eval_times = np.atleast_1d(np.asarray(eval_times, dtype=np.float64))
    E = eval_times.size
    out = np.zeros((batch.n_paths, E, f.dim))
    if batch.times.size:
        vals = f(batch.times, batch.marks)
        for e, t in enumerate(eval_times):
            live = batch.times <= t
            if not np.any(live):
                continue
            contrib = vals[live]
            if A is not None:
                contrib = np.exp(np.outer(t - batch.times[live], A.eigenvalues)) * contrib
            np.add.at(out[:, e, :], batch.path[live], contrib)
    for e, t in enumerate(eval_times):
        out[:, e, :] -= compensator_convolution(A, f, measure, t, quad_steps)
    return out


def convolved_supremum(A, f: Integrand, train: JumpTrain, measure, grid_times,
                       quad_steps: int = 200) -> float:
    """``sup ||int_0^t int S_{t-s} f q||`` over the grid augmented with jump
    times (both the pre- and post-jump values)."""
    grid_times = np.asarray(grid_times, dtype=np.float64)
    tr = train.restrict(grid_times[-1])
    ts = np.union1d(grid_times, tr.times)
    a = A.eigenvalues
    vals = f(tr.times, tr.marks) if tr.count else np.zeros((0, f.dim))
    post = np.zeros((ts.size, f.dim))
    if tr.count:
        lag = ts[:, None] - tr.times[None, :]
        live = lag >= 0
        kern = np.exp(np.where(live, lag, 0.0)[..., None] * a) * live[..., None]
        post = np.einsum("ejn,jn->en", kern, vals)
    comp = np.stack([compensator_convolution(A, f, measure, t, quad_steps) for t in ts])
    post -= comp
    best = np.linalg.norm(post, axis=1).max()
    if tr.count:
        pos = np.searchsorted(ts, tr.times)
        pre = post[pos] - vals
        best = max(best, np.linalg.norm(pre, axis=1).max())
    return float(best)


def _compensator_path(A, f: Integrand, measure, times, quad_steps: int) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    if f.time_independent:
        c = f.mean(0.0, measure)
        w = times[:, None] if A is None else convolution_weight(A, times)
        return np.where(times[:, None] > 0, w, 0.0) * c
    return np.stack([compensator_convolution(A, f, measure, t, quad_steps) for t in times]) \
        if times.size else np.zeros((0, f.dim))


def convolved_supremum_batch(A, f: Integrand, batch: TrainBatch, measure, grid_times,
                             quad_steps: int = 200) -> np.ndarray:
    """Vectorised :func:`convolved_supremum` for every path of ``batch``."""
    grid_times = np.asarray(grid_times, dtype=np.float64)
    grid_vals = convolved_integral_batch(A, f, batch, measure, grid_times, quad_steps)
    best = np.linalg.norm(grid_vals, axis=2).max(axis=1)
    live = batch.times <= grid_times[-1]
    if not np.any(live):
        return best
    tj, path = batch.times[live], batch.path[live]
    vals = f(tj, batch.marks[live])
    # pairs (j, i) of jumps on the same path with i at or before j
    starts = np.searchsorted(path, path, side="left")
    lengths = np.arange(tj.size) - starts + 1
    j_idx = np.repeat(np.arange(tj.size), lengths)
    i_idx = np.arange(j_idx.size) - np.repeat(np.cumsum(lengths) - lengths, lengths) + starts[j_idx]
    lag = tj[j_idx] - tj[i_idx]
    kern = np.exp(lag[:, None] * A.eigenvalues) if A is not None else 1.0
    post = np.zeros((tj.size, f.dim))
    np.add.at(post, j_idx, kern * vals[i_idx])
    post -= _compensator_path(A, f, measure, tj, quad_steps)
    pre = post - vals
    jump_best = np.maximum(np.linalg.norm(post, axis=1), np.linalg.norm(pre, axis=1))
    np.maximum.at(best, path, jump_best)
    return best


@dataclass
class MaximalInequalityReport:
    epsilon: float
    probability: float
    band: float
    bound: float
    passed: bool
    sup_norms: np.ndarray

    @property
    def slack(self) -> float:
        return self.bound + self.band - self.probability


def maximal_inequality_check(A, f: Integrand, measure, T: float, eps=None, paths: int = 1000,
                             seed: int = 0, grid_steps: int = 100, eps_quantile: float | None = None,
                             quad_steps: int = 200, n_jobs: int = 1) -> MaximalInequalityReport:
    """Monte Carlo check of
    ``P[sup_t ||int_0^t S_{t-s} f q|| > eps] <= 4 e^{2 alpha+ T} / eps^2 * int_0^T int ||f||^2 beta ds``.

    Either ``eps`` or ``eps_quantile`` (a quantile of the sampled suprema) selects eps.
    """
    if paths < 1000:
        raise ValueError("need at least 1000 paths")
    grid = np.linspace(0.0, T, grid_steps + 1)

    def run(ids):
        batch = sample_train_batch(measure, T, seed, ids)
        return convolved_supremum_batch(A, f, batch, measure, grid, quad_steps)

    sups = map_streams(run, np.arange(paths), n_jobs)
    if eps is None:
        if eps_quantile is None:
            raise ValueError("give eps or eps_quantile")
        eps = float(np.quantile(sups, eps_quantile))
    return maximal_inequality_report(A, f, measure, T, sups, eps, quad_steps)


def maximal_inequality_report(A, f: Integrand, measure, T: float, sups, eps: float,
                              quad_steps: int = 200) -> MaximalInequalityReport:
    """Evaluate the maximal-inequality bound at ``eps`` for already sampled suprema."""
    sups = np.asarray(sups, dtype=np.float64)
    paths = sups.size
    if not eps > 0:
        raise ValueError("eps must be positive")
    prob = float(np.mean(sups > eps))
    band = 3.0 * math.sqrt(prob * (1 - prob) / paths)
    if f.time_independent:
        energy = T * f.second_moment(0.0, measure)
    else:
        s, h = _midpoints(0.0, T, quad_steps)
        energy = h * sum(f.second_moment(si, measure) for si in s)
    alpha = max(A.growth_rate, 0.0)
    bound = 4.0 * math.exp(2 * alpha * T) / eps**2 * energy
    return MaximalInequalityReport(eps, prob, band, bound, prob <= bound + band, sups)

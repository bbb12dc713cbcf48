"""Diagonal generators and their semigroup, resolvent and Yosida calculus.

A generator is stored as its list of eigenvalues; every operator built from it
(the semigroup, the resolvent, the Yosida approximation) acts mode by mode in
closed form. Quadrature only shows up in :func:`generator_identity_suite`,
which checks the classical semigroup identities numerically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SpectrumError(ValueError):
    """Raised when a spectral parameter lies outside the resolvent half-line."""


@dataclass(frozen=True)
class DiagonalGenerator:
    """Generator ``A`` with real eigenvalues ``a_1..a_N`` in its eigenbasis.

    The induced semigroup is a pseudo-contraction (``M = 1``) with growth rate
    ``max_k a_k``.
    """

    eigenvalues: np.ndarray
    bound: float = field(default=1.0, init=False)

    def __post_init__(self):
        a = np.array(self.eigenvalues, dtype=np.float64).reshape(-1)
        if a.size < 1:
            raise ValueError("a generator needs at least one mode")
        if not np.all(np.isfinite(a)):
            raise ValueError("eigenvalues must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "eigenvalues", a)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def growth_rate(self) -> float:
        return float(self.eigenvalues.max())

    def apply(self, x):
        """Return ``A x``."""
        return self.eigenvalues * np.asarray(x, dtype=np.float64)

    def semigroup_norm(self, t: float) -> float:
        _check_time(t)
        return float(np.exp(t * self.eigenvalues).max())

    def __eq__(self, other):
        if not isinstance(other, DiagonalGenerator):
            return NotImplemented
        return np.array_equal(self.eigenvalues, other.eigenvalues)

    def __hash__(self):
        return hash(self.eigenvalues.tobytes())


def laplacian_dirichlet(n_modes: int) -> DiagonalGenerator:
    """Dirichlet Laplacian on (0, 1) truncated to its first ``n_modes`` modes."""
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    k = np.arange(1, n_modes + 1, dtype=np.float64)
    return DiagonalGenerator(-(k**2) * np.pi**2)


def _check_time(t):
    if not t >= 0:
        raise ValueError(f"time must be nonnegative, got {t!r}")


def _check_resolvent(A: DiagonalGenerator, lam: float):
    if not lam > A.growth_rate:
        raise SpectrumError(
            f"lambda={lam!r} must exceed the growth rate {A.growth_rate!r}"
        )


def semigroup_apply(A: DiagonalGenerator, t: float, x) -> np.ndarray:
    """Return ``S_t x``; ``x`` may carry leading batch axes."""
    _check_time(t)
    return np.exp(t * A.eigenvalues) * np.asarray(x, dtype=np.float64)


def convolution_weight(A: DiagonalGenerator, dt) -> np.ndarray:
    """Per-mode weights of ``int_0^dt S_s ds``.

    ``dt`` may be an array; the mode axis is appended last.
    """
    dt = np.asarray(dt, dtype=np.float64)
    if not np.all(dt > 0):
        raise ValueError("dt must be positive")
    a = A.eigenvalues
    d = dt[..., None]
    zero = a == 0.0
    safe = np.where(zero, 1.0, a)
    return np.where(zero, d, np.expm1(d * a) / safe)


def resolvent_apply(A: DiagonalGenerator, lam: float, x) -> np.ndarray:
    """Return ``R(lam, A) x = (lam I - A)^{-1} x``."""
    _check_resolvent(A, lam)
    return np.asarray(x, dtype=np.float64) / (lam - A.eigenvalues)


def yosida_multiplier(A: DiagonalGenerator, lam: float) -> np.ndarray:
    """Per-mode symbol of ``R_lam = lam R(lam, A)``."""
    _check_resolvent(A, lam)
    return lam / (lam - A.eigenvalues)


def yosida_generator(A: DiagonalGenerator, lam: float) -> DiagonalGenerator:
    """Yosida approximation ``A_lam = lam^2 R(lam, A) - lam I`` as a new generator."""
    _check_resolvent(A, lam)
    a = A.eigenvalues
    return DiagonalGenerator(lam * a / (lam - a))


@dataclass
class HilleYosidaReport:
    rows: list  # (lam, r, norm, bound, slack)
    worst_slack: float
    passed: bool


def hille_yosida_verify(A: DiagonalGenerator, lambdas, r_max: int) -> HilleYosidaReport:
    """Check ``||R(lam, A)^r|| <= M (lam - alpha)^{-r}`` for each ``lam`` and ``r <= r_max``."""
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    lambdas = [float(v) for v in np.atleast_1d(lambdas)]
    for lam in lambdas:
        _check_resolvent(A, lam)
    alpha = A.growth_rate
    rows = []
    for lam in lambdas:
        for r in range(1, r_max + 1):
            norm = float(np.max((lam - A.eigenvalues) ** (-float(r))))
            bound = A.bound * (lam - alpha) ** (-float(r))
            rows.append((lam, r, norm, bound, bound - norm))
    worst = min(row[4] for row in rows)
    return HilleYosidaReport(rows=rows, worst_slack=worst, passed=worst >= 0.0)


@dataclass
class IdentityReport:
    """Residuals of the semigroup identities together with the step sizes used."""

    integral_residual: float
    integral_quadrature_residual: float
    derivative_residual: float
    laplace_residual: float
    quadrature_step: float
    difference_step: float
    laplace_step: float
    laplace_cutoff: float


def laplace_cutoff(A: DiagonalGenerator, lam: float, tail: float = 1e-12) -> float:
    """Smallest ``s_max`` with ``exp(-(lam - alpha) s_max) <= tail``."""
    _check_resolvent(A, lam)
    return float(np.log(1.0 / tail) / (lam - A.growth_rate))


def laplace_resolvent(A, lam, x, steps: int, s_max: float | None = None) -> np.ndarray:
    """Composite midpoint approximation of ``int_0^s_max e^{-lam s} S_s x ds``."""
    if s_max is None:
        s_max = laplace_cutoff(A, lam)
    h = s_max / steps
    s = (np.arange(steps) + 0.5) * h
    kernel = np.exp(np.outer(s, A.eigenvalues - lam)).sum(axis=0) * h
    return kernel * np.asarray(x, dtype=np.float64)


def generator_identity_suite(
    A: DiagonalGenerator,
    t: float,
    lam: float,
    x,
    steps: int,
    difference_step: float | None = None,
    s_max: float | None = None,
) -> IdentityReport:
    """Residual norms of the integral, derivative and Laplace identities.

    (i)   ``A int_0^t S_s x ds = S_t x - x``, closed form and by midpoint rule;
    (ii)  ``d/dt S_t x = A S_t x`` by central difference;
    (iii) ``int_0^inf e^{-lam s} S_s x ds = R(lam, A) x`` on a truncated range.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    _check_resolvent(A, lam)
    x = np.asarray(x, dtype=np.float64)
    a = A.eigenvalues
    flow = semigroup_apply(A, t, x) - x

    closed = a * convolution_weight(A, t) * x
    integral_residual = float(np.linalg.norm(closed - flow))

    h = t / steps
    mids = (np.arange(steps) + 0.5) * h
    quad = np.exp(np.outer(mids, a)).sum(axis=0) * h * x
    integral_quadrature_residual = float(np.linalg.norm(a * quad - flow))

    hd = t / steps if difference_step is None else difference_step
    hd = min(hd, t)
    deriv = (semigroup_apply(A, t + hd, x) - semigroup_apply(A, t - hd, x)) / (2 * hd)
    derivative_residual = float(np.linalg.norm(deriv - A.apply(semigroup_apply(A, t, x))))

    if s_max is None:
        s_max = laplace_cutoff(A, lam)
    lap = laplace_resolvent(A, lam, x, steps, s_max)
    laplace_residual = float(np.linalg.norm(lap - resolvent_apply(A, lam, x)))

    return IdentityReport(
        integral_residual=integral_residual,
        integral_quadrature_residual=integral_quadrature_residual,
        derivative_residual=derivative_residual,
        laplace_residual=laplace_residual,
        quadrature_step=h,
        difference_step=hd,
        laplace_step=s_max / steps,
        laplace_cutoff=s_max,
    )


@dataclass
class YosidaLimits:
    lambdas: np.ndarray
    resolvent_gap: np.ndarray  # ||R_lam x - x||
    generator_gap: np.ndarray  # ||A_lam x - A x||
    semigroup_gap: np.ndarray  # sup_t ||exp(t A_lam) x - S_t x||


def yosida_limits(A: DiagonalGenerator, x, lambdas, times) -> YosidaLimits:
    """Distances between the Yosida objects and their limits along ``lambdas``."""
    x = np.asarray(x, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    exact = np.exp(np.outer(times, A.eigenvalues)) * x
    rg, gg, sg = [], [], []
    for lam in lambdas:
        rg.append(np.linalg.norm(yosida_multiplier(A, lam) * x - x))
        A_lam = yosida_generator(A, lam)
        gg.append(np.linalg.norm(A_lam.apply(x) - A.apply(x)))
        approx = np.exp(np.outer(times, A_lam.eigenvalues)) * x
        sg.append(np.linalg.norm(approx - exact, axis=1).max())
    return YosidaLimits(lambdas, np.array(rg), np.array(gg), np.array(sg))

"""Experiment pipelines dispatched from a validated configuration."""
from __future__ import annotations

import math

import numpy as np

from .config import ConfigError, build_model
from .integrator import (
    SimulationGrid,
    moment_oracle,
    simulate_ensemble,
    simulate_yosida_path,
    st2_norm,
    stationary_second_moment,
    yosida_gap_estimate,
)
from .noise import (
    Integrand,
    RngStream,
    convolved_integral_batch,
    maximal_inequality_check,
    maximal_inequality_report,
    sample_train_batch,
)
from .operators import (
    generator_identity_suite,
    hille_yosida_verify,
    semigroup_apply,
    yosida_limits,
)
from .results import ResultTable
from .stability import (
    EquilibriumError,
    certified_rate,
    dissipativity_estimate,
    exp_stability_check,
    generator_gap,
    lyapunov_check,
    mean_square_decay,
    quadratic_lyapunov,
)
from .transport import contraction_estimate, invariant_measure_sampler


def _initial(cfg, key, N, default):
    v = cfg.get("initial", {}).get(key)
    if v is None:
        return np.full(N, default, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (N,):
        raise ConfigError(f"expected {N} coordinates", f"initial.{key}")
    return v


def _probe_pairs(N, seed, count=32):
    gen = RngStream(seed, 2**63).generator()
    scales = np.geomspace(1e-3, 1e2, count)
    X = gen.standard_normal((count, N)) * scales[:, None]
    Y = gen.standard_normal((count, N)) * scales[::-1, None]
    return list(zip(X, Y))


def run_certify_operator(cfg, model, table, threads):
    A = model.generator
    p = cfg["params"]
    x = np.ones(A.n_modes)
    lambdas = [lam for lam in p.get("lambdas", [1.0, 10.0, 100.0]) if lam > A.growth_rate]
    r_max = int(p.get("r_max", 5))
    name = "certify_operator"

    ts = np.linspace(0.0, 10.0, 11)
    table.add(name, "semigroup_identity", 0.0, float(np.linalg.norm(semigroup_apply(A, 0.0, x) - x)),
              bound=0.0, passed=np.array_equal(semigroup_apply(A, 0.0, x), x))
    worst = 0.0
    for s in ts:
        for t in ts:
            lhs = semigroup_apply(A, s + t, x)
            rhs = semigroup_apply(A, s, semigroup_apply(A, t, x))
            worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    tol = 1e-12 * float(np.linalg.norm(x))
    table.add(name, "semigroup_composition", 10.0, worst, bound=tol, passed=worst <= tol)
    for t in ts:
        g = A.semigroup_norm(t)
        b = math.exp(t * A.growth_rate)
        table.add(name, "growth_bound", float(t), g, bound=b, passed=abs(g - b) <= 4e-16 * b)

    hy = hille_yosida_verify(A, lambdas, r_max)
    for lam, r, norm, bound, slack in hy.rows:
        table.add(name, f"hille_yosida_r{r}", lam, norm, band=slack, bound=bound, passed=slack >= 0)

    lam_id = float(p.get("identity_lambda", max(1.0, A.growth_rate + 1.0)))
    t_id = float(p.get("identity_t", 1.0))
    steps = int(p.get("quadrature_steps", 100_000))
    rep = generator_identity_suite(A, t_id, lam_id, x, steps)
    table.add(name, "identity_integral", t_id, rep.integral_residual, bound=1e-10,
              passed=rep.integral_residual <= 1e-10)
    h = rep.difference_step
    a = A.eigenvalues
    taylor = float(np.linalg.norm(np.abs(a) ** 3 * np.exp(a * (t_id - h)) * np.abs(x))) * h * h / 6
    taylor = max(taylor, 1e-13)
    table.add(name, "identity_derivative", h, rep.derivative_residual, bound=taylor,
              passed=rep.derivative_residual <= taylor * 1.01 + 1e-12)
    table.add(name, "identity_laplace", rep.laplace_step, rep.laplace_residual, bound=1e-6,
              passed=rep.laplace_residual <= 1e-6)

    lims = yosida_limits(A, x, p.get("yosida_lambdas", [10.0, 1e2, 1e3, 1e4]), np.linspace(0, 1, 21))
    for q, vals in (("yosida_resolvent_gap", lims.resolvent_gap),
                    ("yosida_generator_gap", lims.generator_gap),
                    ("yosida_semigroup_gap", lims.semigroup_gap)):
        for i, lam in enumerate(lims.lambdas):
            prev = float(vals[i - 1]) if i else None
            table.add(name, q, float(lam), float(vals[i]), bound=prev,
                      passed=True if i == 0 else vals[i] <= vals[i - 1])


def run_noise_checks(cfg, model, table, threads):
    measure = model.measure
    A = model.generator
    p = cfg["params"]
    T = float(cfg["grid"]["T"])
    paths = int(cfg["mc"]["paths"])
    seed = int(cfg["mc"]["seed"])
    name = "noise_checks"
    rel = float(p.get("relative_tolerance", 0.05))

    batch = sample_train_batch(measure, T, seed, np.arange(paths))
    mean_count = float(batch.counts.mean())
    expected = measure.rate * T
    err = abs(mean_count - expected) / expected if expected > 0 else abs(mean_count)
    table.add(name, "poisson_count_mean", T, mean_count, band=3 * math.sqrt(max(expected, 0) / paths),
              bound=expected, passed=err <= rel)

    proj = np.zeros((1, measure.dim))
    proj[0, 0] = 1.0
    f_flat = Integrand.mark_linear(proj)
    f_decay = Integrand.mark_linear(proj, time_factor=lambda s: np.exp(-s))
    vals = convolved_integral_batch(None, f_flat, batch, measure, [T])[:, 0, 0]
    second = float(np.mean(vals**2))
    energy = T * f_flat.second_moment(0.0, measure)
    err = abs(second - energy) / energy if energy > 0 else abs(second)
    table.add(name, "ito_isometry", T, second, band=3 * float(np.std(vals**2)) / math.sqrt(paths),
              bound=energy, passed=err <= rel)

    grid = np.linspace(0.0, T, int(p.get("martingale_points", 21)))
    mart = convolved_integral_batch(None, f_decay, batch, measure, grid, quad_steps=400)[:, :, 0]
    means = mart.mean(axis=0)
    se = mart.std(axis=0, ddof=1) / math.sqrt(paths) if paths > 1 else np.zeros_like(means)
    for t, m, s in zip(grid, means, se):
        table.add(name, "martingale_mean", float(t), float(m), band=4 * float(s), bound=0.0,
                  passed=abs(m) <= 4 * s + 1e-14)

    M = np.zeros((A.n_modes, measure.dim))
    M[:, 0] = 1.0
    f_state = Integrand.mark_linear(M)
    mi_paths = int(p.get("maximal_paths", paths))
    mi_paths = max(mi_paths, 1000)
    quantiles = p.get("maximal_quantiles", [0.5, 0.9, 0.99, 0.999])
    first = maximal_inequality_check(A, f_state, measure, T, paths=mi_paths, seed=seed,
                                     grid_steps=int(p.get("maximal_grid", 100)),
                                     eps_quantile=quantiles[0], n_jobs=threads)
    for q in quantiles:
        eps = float(np.quantile(first.sup_norms, q))
        rep = maximal_inequality_report(A, f_state, measure, T, first.sup_norms, eps)
        table.add(name, "maximal_inequality", rep.epsilon, rep.probability, band=rep.band,
                  bound=rep.bound, passed=rep.passed)


def run_simulate(cfg, model, table, threads):
    A = model.generator
    grid = SimulationGrid(float(cfg["grid"]["T"]), int(cfg["grid"]["steps"]))
    paths, seed = int(cfg["mc"]["paths"]), int(cfg["mc"]["seed"])
    xi = _initial(cfg, "xi", A.n_modes, 1.0)
    stride = max(1, grid.steps // int(cfg["params"].get("record_points", 20)))
    ens = simulate_ensemble(A, model.coefficients, model.measure, grid, xi, seed, paths=paths,
                            record=stride, n_jobs=threads)
    name = "simulate"
    oracle = moment_oracle(model, xi, ens.times)
    X1 = ens.states[:, :, 0]
    sq = np.sum(ens.states**2, axis=2)
    for j, t in enumerate(ens.times):
        m, s = float(X1[:, j].mean()), float(X1[:, j].std(ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
        m2 = float(sq[:, j].mean())
        s2 = float(sq[:, j].std(ddof=1) / math.sqrt(paths)) if paths > 1 else 0.0
        if oracle is None:
            table.add(name, "mean_mode1", float(t), m, band=4 * s)
            table.add(name, "second_moment", float(t), m2, band=4 * s2)
        else:
            om = float(oracle[0][j, 0])
            o2 = float(oracle[1][j].sum())
            table.add(name, "mean_mode1", float(t), m, band=4 * s, bound=om,
                      passed=abs(m - om) <= 4 * s + 1e-12)
            ok2 = abs(m2 - o2) <= max(0.05 * abs(o2), 4 * s2) + 1e-12
            table.add(name, "second_moment", float(t), m2, band=4 * s2, bound=o2, passed=ok2)
    table.add(name, "st2_norm", grid.T, st2_norm(ens))


def run_yosida_gap(cfg, model, table, threads):
    A = model.generator
    grid = SimulationGrid(float(cfg["grid"]["T"]), int(cfg["grid"]["steps"]))
    paths, seed = int(cfg["mc"]["paths"]), int(cfg["mc"]["seed"])
    xi = _initial(cfg, "xi", A.n_modes, 1.0)
    n_list = [float(n) for n in cfg["params"].get("n_list", [4, 16, 64, 256])]
    name = "yosida_gap"
    curve = yosida_gap_estimate(A, model.coefficients, model.measure, grid, xi, paths, n_list, seed,
                                n_jobs=threads)
    margins = curve.decrease_margins()
    for i, n in enumerate(n_list):
        prev = float(curve.mean[i - 1]) if i else None
        ok = True if i == 0 else bool(margins[i - 1] > 1.0)
        table.add(name, "gap", n, float(curve.mean[i]), band=3 * float(curve.stderr[i]), bound=prev,
                  passed=ok)
    H = quadratic_lyapunov(A.n_modes)
    gaps = []
    for n in n_list + [1e6]:
        path = simulate_yosida_path(A, model.coefficients, model.measure, grid, xi, RngStream(seed, 0), n)
        gaps.append(generator_gap(A, model.coefficients, model.measure, H, path, n))
    for i, n in enumerate(n_list + [1e6]):
        prev = gaps[i - 1] if i else None
        ok = True if i == 0 else gaps[i] <= gaps[i - 1] + 1e-12
        table.add(name, "generator_gap", n, gaps[i], bound=prev, passed=ok)


def run_stability(cfg, model, table, threads):
    A, coeffs, measure = model.generator, model.coefficients, model.measure
    grid = SimulationGrid(float(cfg["grid"]["T"]), int(cfg["grid"]["steps"]))
    paths, seed = int(cfg["mc"]["paths"]), int(cfg["mc"]["seed"])
    N = A.n_modes
    xi = _initial(cfg, "xi", N, 1.0)
    eta = _initial(cfg, "eta", N, 0.0)
    name = "stability"
    dis = dissipativity_estimate(A, coeffs, _probe_pairs(N, seed))
    table.add(name, "alpha_dis", None, dis.analytic, bound=dis.empirical,
              passed=dis.analytic <= dis.empirical + 1e-12)
    alpha, eps = certified_rate(A, coeffs)
    stride = max(1, grid.steps // int(cfg["params"].get("record_points", 20)))
    rep = mean_square_decay(A, coeffs, measure, xi, eta, grid, paths, seed, record=stride, n_jobs=threads)
    if not rep.certified:
        table.add(name, "certification refused", None, eps, bound=0.0, passed=False)
    else:
        table.add(name, "epsilon", None, eps, bound=0.0, passed=True)
    for t, d, s, b in zip(rep.times, rep.decay, rep.stderr, rep.bound):
        ok = bool(d <= b * 1.1 + 3 * s) if rep.certified else False
        table.add(name, "decay", float(t), float(d), band=3 * float(s), bound=float(b), passed=ok)
    table.add(name, "fitted_rate", None, rep.fitted_rate, bound=eps, passed=rep.certified)
    table.add(name, "continuity_constant", grid.T, rep.continuity_constant)

    H = quadratic_lyapunov(N)
    probes = np.concatenate([np.zeros((1, N)), np.array([p[0] for p in _probe_pairs(N, seed)])])
    ly = lyapunov_check(H, A, coeffs, measure, probes)
    table.add(name, "lyapunov_c3", None, ly.c3 if ly.c3 is not None else float("nan"), passed=True)
    if ly.passed:
        try:
            ex = exp_stability_check(A, coeffs, measure, H, xi, grid, paths, seed, record=stride,
                                     n_jobs=threads)
        except EquilibriumError:
            return
        for t, m, s, b in zip(ex.times, ex.second_moment, ex.stderr, ex.bound):
            table.add(name, "lyapunov_second_moment", float(t), float(m), band=3 * float(s),
                      bound=float(b), passed=bool(m <= b + 3 * s))


def run_contraction(cfg, model, table, threads):
    A = model.generator
    N = A.n_modes
    p = cfg["params"]
    seed = int(cfg["mc"]["seed"])
    xi = _initial(cfg, "xi", N, 2.0)
    eta = _initial(cfg, "eta", N, 0.0)
    t_list = p.get("t_list", [0.0, 0.5, 1.0, 1.5, 2.0])
    dt = float(p.get("dt", cfg["grid"]["T"] / cfg["grid"]["steps"]))
    n = int(p.get("n", 256))
    name = "contraction"
    alpha, eps = certified_rate(A, model.coefficients)
    if eps <= 0:
        table.add(name, "certification refused", None, eps, bound=0.0, passed=False)
        return
    rep = contraction_estimate(model, xi, eta, t_list, n, dt, seed, n_jobs=threads)
    for j, t in enumerate(rep.times):
        table.add(name, "w2_independent", float(t), float(rep.independent[j]), band=float(rep.band[j]),
                  bound=float(rep.bound[j]), passed=bool(rep.passed[j]))
        table.add(name, "w2_coupled", float(t), float(rep.coupled[j]), bound=float(rep.bound[j]),
                  passed=bool(rep.coupled[j] <= rep.bound[j] * 1.1 + 1e-12))


def run_invariant(cfg, model, table, threads):
    p = cfg["params"]
    seed = int(cfg["mc"]["seed"])
    name = "invariant"
    alpha, eps = certified_rate(model.generator, model.coefficients)
    if eps <= 0:
        table.add(name, "certification refused", None, eps, bound=0.0, passed=False)
        return
    samples = int(p.get("samples", 4000))
    inv = invariant_measure_sampler(model, samples, seed, p.get("burn_in"), p.get("gap"),
                                    int(p.get("substeps", 10)))
    m2 = inv.measure.second_moment()
    oracle = stationary_second_moment(model)
    if oracle is not None:
        o = float(oracle.sum())
        ok = abs(m2 - o) <= 0.1 * o if o > 0 else m2 <= 1e-12
        table.add(name, "second_moment", float(samples), m2, bound=o, passed=ok)
    else:
        table.add(name, "second_moment", float(samples), m2)
    table.add(name, "stationarity", inv.gap, inv.stationarity_distance, bound=inv.self_distance,
              passed=inv.stationary)


RUNNERS = {
    "certify_operator": run_certify_operator,
    "noise_checks": run_noise_checks,
    "simulate": run_simulate,
    "yosida_gap": run_yosida_gap,
    "stability": run_stability,
    "contraction": run_contraction,
    "invariant": run_invariant,
}


def run_experiment(cfg: dict, threads: int = 1) -> ResultTable:
    """Run the pipeline named by ``cfg['experiment']`` and collect its rows."""
    exp = cfg["experiment"]
    if exp not in RUNNERS:
        raise ConfigError(f"unknown experiment {exp!r}", "experiment")
    model = build_model(cfg)
    table = ResultTable()
    RUNNERS[exp](cfg, model, table, max(1, int(threads)))
    return table

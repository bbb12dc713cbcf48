"""Acceptance suite: one test per criterion, one PASS/FAIL summary line each.

Tolerances, path counts and runtime limits are pinned to the published
acceptance targets; nothing here is loosened to make a check pass.
"""
import itertools
import json
import math

import numpy as np

from jumpspde import cli
from jumpspde.config import validate_config
from jumpspde.experiments import run_experiment
from jumpspde.integrator import (
    SimulationGrid,
    SPDEModel,
    additive_coefficients,
    linear_coefficients,
    moment_oracle,
    saturating_coefficients,
    simulate_ensemble,
    simulate_yosida_path,
    stationary_second_moment,
    yosida_gap_estimate,
)
from jumpspde.noise import AtomMarks, RngStream
from jumpspde.operators import (
    DiagonalGenerator,
    generator_identity_suite,
    hille_yosida_verify,
    laplacian_dirichlet,
    semigroup_apply,
    yosida_limits,
)
from jumpspde.stability import (
    certified_rate,
    exp_stability_check,
    fit_decay_rate,
    generator_gap,
    lyapunov_check,
    mean_square_decay,
    quadratic_lyapunov,
)
from jumpspde.transport import (
    contraction_estimate,
    invariant_measure_sampler,
    solve_assignment,
    wasserstein2_1d,
    wasserstein2_exact,
)

# scalar jump-OU: a = -1, f(u) = u, marks +-1 at total rate 2, stationary E X^2 = 1
OU_MEASURE = AtomMarks(2.0, [[1.0], [-1.0]])
OU_MODEL = SPDEModel(DiagonalGenerator([-1.0]), additive_coefficients(OU_MEASURE, [[1.0]]), OU_MEASURE)
OU_CONFIG = {
    "model": {"family": "explicit", "eigenvalues": [-1.0]},
    "noise": {"rate": 2.0, "mark_family": {"type": "atoms", "points": [[1.0], [-1.0]]}},
    "coefficients": {"preset": "additive", "mark_map": [[1.0]]},
}

# multiplicative scalar model: f(u, x) = u x, marks +-0.5 at rate 4 so moment(2) = 1
MULT_MEASURE = AtomMarks(4.0, [[0.5], [-0.5]])


def test_criterion_01_operator_certification(criterion):
    c = criterion(1, limit_s=1.0)
    A = laplacian_dirichlet(8)
    x = np.ones(8)
    ts = np.linspace(0.0, 5.0, 11)
    c.check("S0=I", np.array_equal(semigroup_apply(A, 0.0, x), x))
    comp = max(np.linalg.norm(semigroup_apply(A, s + t, x) - semigroup_apply(A, s, semigroup_apply(A, t, x)))
               for s in ts for t in ts)
    c.check("composition", comp <= 1e-12, f"{comp:.2e}")
    hy = hille_yosida_verify(A, [1.0, 10.0, 100.0], 5)
    c.check("hille_yosida", hy.passed and hy.worst_slack >= 0 and len(hy.rows) == 15,
            f"worst slack {hy.worst_slack:.2e}")
    lap = max(generator_identity_suite(A, 1.0, lam, x, 100_000).laplace_residual for lam in (1.0, 10.0, 100.0))
    c.check("laplace_resolvent", lap <= 1e-6, f"{lap:.2e}")
    c.finish()


def test_criterion_02_yosida_limits(criterion):
    c = criterion(2, limit_s=1.0)
    A = laplacian_dirichlet(8)
    lims = yosida_limits(A, np.ones(8), [10.0, 1e2, 1e3, 1e4], np.linspace(0.0, 1.0, 21))
    for label, vals in (("resolvent", lims.resolvent_gap), ("generator", lims.generator_gap)):
        c.check(f"{label}_monotone", np.all(np.diff(vals) < 0))
        ratio = vals[-1] / vals[0]
        c.check(f"{label}_final_ratio", ratio <= 1e-3, f"{ratio:.3e} vs 1e-3")
    c.check("semigroup_monotone", np.all(np.diff(lims.semigroup_gap) < 0),
            f"{lims.semigroup_gap[0]:.2e}->{lims.semigroup_gap[-1]:.2e}")
    c.finish()


def test_criterion_03_noise_validation(criterion):
    c = criterion(3, limit_s=30.0)
    cfg = validate_config({
        "experiment": "noise_checks",
        "model": {"family": "laplacian_dirichlet", "n_modes": 4},
        "noise": {"rate": 3.0, "mark_family": {"type": "gaussian", "mean": [0.0], "var": [1.0]}},
        "mc": {"paths": 100_000, "seed": 0},
    })
    table = run_experiment(cfg)
    rows = {q: [r for r in table.rows if r.quantity == q] for q in table.quantities()}
    count = rows["poisson_count_mean"][0]
    c.check("count_mean_5pct", abs(count.value - count.bound) <= 0.05 * count.bound,
            f"{count.value:.4f} vs {count.bound:g}")
    iso = rows["ito_isometry"][0]
    c.check("isometry_5pct", abs(iso.value - iso.bound) <= 0.05 * iso.bound, f"{iso.value:.4f} vs {iso.bound:g}")
    mart = rows["martingale_mean"]
    c.check("martingale_4sigma", all(abs(r.value) <= r.band for r in mart), f"{len(mart)} grid times")
    mi = rows["maximal_inequality"]
    c.check("maximal_inequality", all(r.value <= r.bound + r.band for r in mi),
            ", ".join(f"P={r.value:.3g}<={r.bound:.3g}" for r in mi))
    c.finish()


def test_criterion_04_mild_solution_moments(criterion):
    c = criterion(4, limit_s=60.0)
    grid = SimulationGrid(2.0, 1000)
    assert math.isclose(grid.dt, 2e-3)
    xi = np.array([1.0])
    ens = simulate_ensemble(OU_MODEL.generator, OU_MODEL.coefficients, OU_MEASURE, grid, xi, seed=0,
                            paths=100_000, record=50)
    mean_o, second_o = moment_oracle(OU_MODEL, xi, ens.times)
    # independent closed forms for the oracle itself
    assert np.allclose(mean_o[:, 0], np.exp(-ens.times))
    assert np.allclose(second_o[:, 0], np.exp(-2 * ens.times) + (1 - np.exp(-2 * ens.times)))
    mean = ens.states[:, :, 0].mean(axis=0)
    second = (ens.states[:, :, 0] ** 2).mean(axis=0)
    rel_m = np.max(np.abs(mean - mean_o[:, 0]) / np.abs(mean_o[:, 0]))
    rel_s = np.max(np.abs(second - second_o[:, 0]) / second_o[:, 0])
    c.check("mean_5pct", rel_m <= 0.05, f"max rel {rel_m:.3%}")
    c.check("second_moment_5pct", rel_s <= 0.05, f"max rel {rel_s:.3%}")
    c.finish()


def test_criterion_05_yosida_gap(criterion):
    c = criterion(5, limit_s=120.0)
    n_list = [4.0, 16.0, 64.0, 256.0]
    xi = 1.7
    silent = AtomMarks(0.0, [[1.0]])
    A = DiagonalGenerator([-1.0])
    closed = yosida_gap_estimate(A, linear_coefficients(silent, 1), silent, SimulationGrid(1.0, 100),
                                 [xi], paths=4, n_list=n_list)
    exact = np.array([(xi / (n + 1)) ** 2 for n in n_list])
    err = float(np.max(np.abs(closed.per_path - exact)))
    c.check("closed_form", err <= 1e-10, f"{err:.1e}")
    curve = yosida_gap_estimate(OU_MODEL.generator, OU_MODEL.coefficients, OU_MEASURE, SimulationGrid(1.0, 500),
                                [1.0], paths=4000, n_list=n_list, seed=0)
    margins = curve.decrease_margins()
    c.check("mc_strict_decrease", curve.strictly_decreasing(),
            "drop/3se " + ", ".join(f"{m:.1f}" for m in margins))
    c.finish()


def test_criterion_06_generator_gap(criterion):
    c = criterion(6, limit_s=30.0)
    A, coeffs = OU_MODEL.generator, OU_MODEL.coefficients
    grid = SimulationGrid(1.0, 1000)
    H = quadratic_lyapunov(1)
    gaps = []
    for n in (4.0, 16.0, 64.0, 256.0, 1e6):
        path = simulate_yosida_path(A, coeffs, OU_MEASURE, grid, [1.0], RngStream(0, 0), n)
        gaps.append(generator_gap(A, coeffs, OU_MEASURE, H, path, n))
    c.check("decreasing", all(b < a for a, b in zip(gaps, gaps[1:])), ", ".join(f"{g:.2e}" for g in gaps))
    tol = 1e-5 * OU_MEASURE.moment(2)
    c.check("n=1e6", gaps[-1] <= tol, f"{gaps[-1]:.2e} <= {tol:.1e}")
    c.finish()


def test_criterion_07_dissipative_stability(criterion):
    c = criterion(7, limit_s=120.0)
    grid = SimulationGrid(1.0, 1000)
    rep = mean_square_decay(OU_MODEL.generator, OU_MODEL.coefficients, OU_MEASURE, [1.0], [0.0], grid,
                            paths=1000, seed=0, record=50)
    exact = np.exp(-2 * rep.times)
    err = float(np.max(np.abs(rep.decay - exact)))
    c.check("additive_exact_decay", err <= 1e-12, f"{err:.1e}")
    c.check("additive_zero_variance", float(np.max(rep.variance)) <= 1e-24, f"{np.max(rep.variance):.1e}")

    A = DiagonalGenerator([-1.0])
    coeffs = linear_coefficients(MULT_MEASURE, 1, jump_scale=1.0)
    alpha, eps = certified_rate(A, coeffs)
    model = SPDEModel(A, coeffs, MULT_MEASURE)
    rep = mean_square_decay(A, coeffs, MULT_MEASURE, [1.0], [0.0], grid, paths=100_000, seed=0, record=50)
    oracle = moment_oracle(model, [1.0], rep.times)[1][:, 0]
    oracle_rate = fit_decay_rate(rep.times, oracle)
    c.check("oracle_rate_is_eps", math.isclose(oracle_rate, eps, rel_tol=1e-9), f"{oracle_rate:.6f} vs {eps:.6f}")
    rel = abs(rep.fitted_rate - eps) / eps
    c.check("mc_rate_10pct", rel <= 0.10, f"fit {rep.fitted_rate:.4f} vs eps {eps:.4f} ({rel:.2%})")
    c.check("bound_with_band", rep.passed)
    c.finish()


def _equilibrium_models():
    lap = laplacian_dirichlet(4)
    yield "multiplicative_scalar", DiagonalGenerator([-1.0]), linear_coefficients(MULT_MEASURE, 1), MULT_MEASURE
    yield "multiplicative_lap4", lap, linear_coefficients(MULT_MEASURE, 4, jump_scale=2.0), MULT_MEASURE
    yield "saturating_lap4", lap, saturating_coefficients(MULT_MEASURE, 4, scale=2.0), MULT_MEASURE


def test_criterion_08_lyapunov_stability(criterion):
    c = criterion(8, limit_s=120.0)
    grid = SimulationGrid(1.0, 500)
    for name, A, coeffs, measure in _equilibrium_models():
        H = quadratic_lyapunov(A.n_modes)
        probes = RngStream(1, 0).generator().standard_normal((64, A.n_modes)) * np.geomspace(1e-3, 1e2, 64)[:, None]
        ly = lyapunov_check(H, A, coeffs, measure, probes)
        if not c.check(f"{name}_certified", ly.passed and ly.c3 > 0, ly.message):
            continue
        rep = exp_stability_check(A, coeffs, measure, H, np.ones(A.n_modes), grid, paths=10_000, seed=0, record=25)
        c.check(name, rep.passed, f"c3={ly.c3:.3f}")
    c.finish()


def test_criterion_09_ot_exactness(criterion):
    c = criterion(9, limit_s=10.0)
    gen = RngStream(9, 0).generator()
    worst = 0.0
    for _ in range(100):
        n = int(gen.integers(1, 8))
        C = gen.random((n, n)) * 10
        assignment = solve_assignment(C)[0]
        cost = C[np.arange(n), assignment].sum()
        perms = np.array(list(itertools.permutations(range(n))))
        brute = C[np.arange(n), perms].sum(axis=1).min()
        worst = max(worst, abs(cost - brute))
    c.check("brute_force", worst <= 1e-12, f"{worst:.1e}")
    worst = 0.0
    for _ in range(50):
        n = int(gen.integers(2, 65))
        a, b = gen.normal(size=n), gen.normal(1.0, 2.0, size=n)
        worst = max(worst, abs(wasserstein2_1d(a, b) - wasserstein2_exact(a[:, None], b[:, None]).distance))
    c.check("one_dimensional", worst <= 1e-12, f"{worst:.1e}")
    c.finish()


def test_criterion_10_wasserstein_contraction(criterion):
    c = criterion(10, limit_s=300.0)
    rep = contraction_estimate(OU_MODEL, [2.0], [0.0], [0.0, 0.5, 1.0, 1.5, 2.0], n=256, dt=1e-3, seed=0)
    target = 2 * np.exp(-rep.times)
    err = float(np.max(np.abs(rep.coupled - target) / target))
    c.check("coupled_2e^-t", err <= 1e-6, f"max rel {err:.1e}")
    c.check("independent_bound", bool(np.all(rep.passed)),
            ", ".join(f"{v:.3f}<={b:.3f}+{w:.3f}" for v, b, w in zip(rep.independent, rep.bound, rep.band)))
    inv = invariant_measure_sampler(OU_MODEL, 4000, seed=0)
    m2, oracle = inv.measure.second_moment(), float(stationary_second_moment(OU_MODEL).sum())
    c.check("invariant_second_moment", abs(m2 - oracle) <= 0.1 * oracle, f"{m2:.4f} vs {oracle:g}")
    c.finish()


def _configs():
    yield "certify", {"experiment": "certify_operator", "model": {"family": "laplacian_dirichlet", "n_modes": 4},
                      "noise": {"rate": 1.0, "mark_family": {"type": "atoms", "points": [[1.0]]}}}
    yield "simulate", dict(OU_CONFIG, experiment="simulate", grid={"T": 1.0, "steps": 200}, mc={"paths": 3000})
    yield "stability", dict(OU_CONFIG, experiment="stability", grid={"T": 1.0, "steps": 200}, mc={"paths": 500})
    yield "yosida", dict(OU_CONFIG, experiment="yosida_gap", grid={"T": 1.0, "steps": 100}, mc={"paths": 500})
    yield "contraction", dict(OU_CONFIG, experiment="contraction", params={"n": 64, "t_list": [0.0, 1.0]})


def test_criterion_11_reproducibility(criterion, tmp_path, monkeypatch):
    c = criterion(11)
    monkeypatch.delenv(cli.THREADS_ENV, raising=False)
    for name, cfg in _configs():
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for run, threads in enumerate((1, 1, 3)):
            out = tmp_path / f"{name}_{run}"
            code = cli.main(["run", str(path), "--out", str(out), "--threads", str(threads)])
            csv = next(out.glob("*.csv")).read_bytes()
            outs.append((code, csv))
        c.check(f"{name}_rerun", outs[0][1] == outs[1][1])
        c.check(f"{name}_threads", outs[0][1] == outs[2][1])
    c.finish()

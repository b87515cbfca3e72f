"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are collected in
the terminal summary) or directly with ``python tests/test_acceptance.py``.
"""

import functools
import json
import math
import sys
import time

import numpy as np
import pytest
from scipy import special

from hermevo import cli
from hermevo.analysis import (
    EXTINCT,
    PERSISTENT,
    ConvergenceFamily,
    classify_model,
    contraction_sampler,
    ibm_extinction_experiment,
    ibm_macro_convergence,
    moment_lyapunov_check,
    stability_experiment,
    strictly_decreasing,
    variance_decay_check,
)
from hermevo.demography import DemographyParams
from hermevo.ibm import IbmScenario, PopulationState, initial_population, simulate
from hermevo.kernels import (
    AdditiveKernel,
    InterpolationLaw,
    InterpolativeKernel,
    MultiplicativeKernel,
    NoiseDensity,
    stationary_additive_profile,
    tjonwu_stationary_reference,
)
from hermevo.macroeq import MacroScenario, SolverConfig, apply_P, default_grid, solve_to_time
from hermevo.mating import (
    CapabilityFunction,
    MatingModel,
    PreferenceFunction,
    normalized_matrix,
    semirandom_matrix,
    solve_mating_constants_discrete,
)
from hermevo.measures import (
    DiscreteMeasure,
    GridMeasure,
    GridSpec,
    grid_from_atoms,
    l1_distance,
    mean,
    variance,
    wasserstein_1d,
    wasserstein_oracle,
)

RESULTS: list[str] = []

GAUSS = AdditiveKernel(NoiseDensity.gaussian(1.0))
TJONWU = MultiplicativeKernel.tjon_wu()


def criterion(number: int, title: str, budget: float):
    """Time the test, check the runtime budget and record one summary line."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            detail, ok, err = "", False, None
            try:
                detail = fn(*args, **kwargs) or ""
                ok = True
            except AssertionError as exc:
                err = exc
                detail = str(exc).splitlines()[0] if str(exc) else "assertion failed"
            elapsed = time.perf_counter() - start
            if ok and elapsed > budget:
                ok = False
                err = AssertionError(f"runtime {elapsed:.1f}s over the {budget:g}s budget")
                detail = str(err)
            line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail} ({elapsed:.1f}s)"
            RESULTS.append(line)
            print(line)
            if err is not None:
                raise err

        return run

    return wrap


def gaussian_cells(grid: GridSpec, loc: float, sd: float) -> GridMeasure:
    lo = grid.nodes - grid.spacing / 2
    hi = grid.nodes + grid.spacing / 2
    m = special.ndtr((hi - loc) / sd) - special.ndtr((lo - loc) / sd)
    return GridMeasure(grid.origin, grid.spacing, m / grid.spacing)


@criterion(1, "Wasserstein oracle equivalence", 5)
def test_wasserstein_oracle():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(500):
        n, m = rng.integers(1, 51, size=2)
        a = DiscreteMeasure(rng.normal(size=n) * rng.uniform(0.1, 5), rng.uniform(size=n)).normalized()
        b = DiscreteMeasure(rng.normal(size=m) * rng.uniform(0.1, 5) + rng.normal(), rng.uniform(size=m))
        b = b.normalized()
        worst = max(worst, abs(wasserstein_1d(a, b) - wasserstein_oracle(a, b)))
    assert worst < 1e-10, f"max deviation {worst:.3g}"
    return f"max deviation {worst:.2e} over 500 pairs"


@criterion(2, "Mean conservation under P", 30)
def test_mean_conservation():
    rng = np.random.default_rng(2)
    interp = InterpolativeKernel(InterpolationLaw.uniform())
    worst = {}
    for kernel, name in ((GAUSS, "additive"), (TJONWU, "multiplicative"), (interp, "interpolative")):
        err = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 30))
            if kernel is TJONWU:
                x = rng.gamma(3.0, 1.0 / 3.0, n) * rng.uniform(0.5, 1.5)
            else:
                x = rng.normal(rng.normal(), rng.uniform(0.2, 1.5), n)
            mu = DiscreteMeasure(x, rng.uniform(size=n)).normalized()
            q = mean(mu)
            if kernel is interp:
                out = apply_P(kernel, mu)
            else:
                grid = default_grid(kernel, max(q, 0.5) if kernel is TJONWU else q, 2048)
                if kernel is TJONWU:
                    grid = GridSpec.spanning(0.0, 20.0 * max(q, 0.5), 2048)
                mu = grid_from_atoms(mu, grid.origin, grid.spacing, grid.n_cells)
                q = mean(mu)
                out = apply_P(kernel, mu)
            err = max(err, abs(mean(out) - q))
        worst[name] = err
        assert err < 1e-9, f"{name}: drift {err:.3g}"
    return ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


@criterion(3, "Carrying capacity (macro and IBM)", 120)
def test_carrying_capacity():
    grid = GridSpec.spanning(-17, 17, 512)
    model = MatingModel("semirandom_selfing", CapabilityFunction.constant(2.0))
    dem = DemographyParams.constants(1.0, 1.0, 1.0)
    sc = MacroScenario(GAUSS, model, dem, config=SolverConfig(dt=0.05, scheme="explicit_euler", grid=grid))
    traj = solve_to_time(gaussian_cells(grid, 0.0, 1.0).scaled(0.5), sc, 20.0, snapshot_every=1.0)
    macro_err = abs(traj.final.mass - 1.0)
    assert macro_err < 1e-3, f"macro mass {traj.final.mass:.6f}"

    N = 5000
    late = []
    for r in range(10):
        init = initial_population(lambda g, n: g.normal(size=n), N, seed=100 + r)
        tr = simulate(IbmScenario(model, GAUSS, dem, init, 4.0, N, seed=r, snapshot_every=0.1,
                                  record_events=False))
        late.append(tr.scaled_mass[tr.times >= 2.0].mean())
    ibm_mean = float(np.mean(late))
    assert abs(ibm_mean - 1.0) < 0.05, f"IBM late mean mass {ibm_mean:.4f}"
    return f"macro |M(20)-1| = {macro_err:.1e}; IBM late-window mass {ibm_mean:.4f}"


@criterion(4, "Gaussian stationary profile", 60)
def test_gaussian_profile():
    grid = default_grid(GAUSS, 0.0, 4096)
    # monotonicity is checked against the flow's own stationary profile; the exact
    # Normal(0, 2) differs from it by the grid bias (~1e-5), a floor the flow cannot cross
    profile = stationary_additive_profile(GAUSS.noise, 0.0, 16, grid)
    sc = MacroScenario(GAUSS, config=SolverConfig(dt=0.05, grid=grid))
    traj = solve_to_time(DiscreteMeasure([-1.0, 1.0], [0.5, 0.5]), sc, 30.0, reference=profile,
                         snapshot_every=0.5)
    d = traj.distances
    d_normal = wasserstein_1d(traj.final.measure, gaussian_cells(grid, 0.0, math.sqrt(2.0)))
    assert strictly_decreasing(d), "distance sequence not strictly decreasing"
    assert d_normal < 1e-2, f"final distance to Normal(0,2) {d_normal:.3g}"
    return (f"d(mu_30, N(0,2)) = {d_normal:.2e}; distance to the stationary profile strictly decreasing "
            f"over {len(d)} snapshots down to {d[-1]:.1e}")


@criterion(5, "Infinite-convolution constructor", 10)
def test_infinite_convolution():
    grid = default_grid(GAUSS, 0.0, 4096)
    prof = stationary_additive_profile(GAUSS.noise, 0.0, 16, grid)
    l1 = l1_distance(prof, gaussian_cells(grid, 0.0, math.sqrt(2.0)))
    var = variance(prof)
    assert l1 < 1e-3, f"L1 to Normal(0,2) {l1:.3g}"
    assert abs(var - 2.0) < 0.02, f"variance {var:.5f}"
    return f"L1 = {l1:.2e}, variance = {var:.6f}"


@criterion(6, "Tjon-Wu equilibrium", 60)
def test_tjonwu():
    grid = GridSpec.spanning(0.0, 20.0, 4096)
    ref = tjonwu_stationary_reference(1.0, grid)
    fixed = l1_distance(apply_P(TJONWU, ref), ref)
    assert fixed < 1e-3, f"(a) L1(P f, f) = {fixed:.3g}"
    uniform = DiscreteMeasure(np.linspace(0, 2, 2001), np.ones(2001)).normalized()
    mu0 = grid_from_atoms(uniform, grid.origin, grid.spacing, grid.n_cells)
    exp = stability_experiment(TJONWU, {"uniform": mu0}, T=30.0, q=1.0, grid=grid, snapshot_every=0.5,
                               threshold=1e-2, metric="l1")
    final_l1 = exp.reports[0].final_l1
    assert final_l1 < 1e-2, f"(b) L1 at t=30 {final_l1:.3g}"
    return f"(a) L1(P f, f) = {fixed:.2e}; (b) L1(mu_30, e^-x) = {final_l1:.2e}"


@criterion(7, "Variance-decay ODE", 60)
def test_variance_decay():
    rep = variance_decay_check(InterpolationLaw.three_point(1 / 3), DiscreteMeasure([-1.0, 1.0], [0.5, 0.5]),
                               T=40.0, dt=0.05, bins=50)
    assert rep.relative_error < 0.05, f"rate {rep.fitted_rate:.4f} vs {rep.expected_rate:.4f}"
    assert rep.final_distance_to_q < 1e-2, f"d(mu_T, delta_q) {rep.final_distance_to_q:.3g}"
    return (f"rate {rep.fitted_rate:.4f} vs {rep.expected_rate:.4f} ({100 * rep.relative_error:.2f}%), "
            f"d(mu_T, delta_q) = {rep.final_distance_to_q:.1e}")


@criterion(8, "Contraction property", 60)
def test_contraction():
    add = contraction_sampler(GAUSS, 0.0, trials=100, seed=8)
    mul = contraction_sampler(TJONWU, 1.0, trials=100, seed=8)
    assert add.all_contract and len(add.ratios) == 100, f"additive max ratio {add.max_ratio:.4f}"
    assert mul.all_contract and len(mul.ratios) == 100, f"multiplicative max ratio {mul.max_ratio:.4f}"
    return f"max ratio additive {add.max_ratio:.3f}, multiplicative {mul.max_ratio:.3f}"


@criterion(9, "Second-moment Lyapunov bounds", 30)
def test_lyapunov():
    add = moment_lyapunov_check(GAUSS, 0.0, trials=100, seed=9)
    mul = moment_lyapunov_check(TJONWU, 1.0, trials=100, seed=9)
    assert add.C == 1.0 and add.L == 0.5
    assert abs(mul.L - 2 / 3) < 1e-12
    assert add.all_hold, f"additive excess {add.max_relative_excess:.3g}"
    assert mul.all_hold, f"multiplicative excess {mul.max_relative_excess:.3g}"
    return (f"additive C=1, L=1/2 excess {add.max_relative_excess:.1e}; "
            f"multiplicative L=2/3 excess {mul.max_relative_excess:.1e}")


@criterion(10, "Extinction and persistence", 120)
def test_regimes():
    low = MatingModel("semirandom_selfing", CapabilityFunction.constant(1.0))
    dead = DemographyParams.constants(1.0, 1.0, 1.0)
    ext = ibm_extinction_experiment(low, GAUSS, dead, PopulationState(np.zeros(5)), 5, 200.0, 20, seed=10)
    high = MatingModel("semirandom_selfing", CapabilityFunction.constant(2.0))
    live = DemographyParams.constants(0.5, 1.0, 1.0)
    rng = np.random.default_rng(10)
    per = ibm_extinction_experiment(high, GAUSS, live, PopulationState(rng.normal(size=20)), 20, 200.0, 20,
                                    seed=1010)
    assert ext["predicted"] == EXTINCT and classify_model(low, dead) == EXTINCT
    assert per["predicted"] == PERSISTENT
    assert ext["extinct"] == 20, f"{ext['extinct']}/20 extinct with D = p"
    assert per["extinct"] == 0, f"{per['extinct']}/20 extinct with D < p"
    return f"D=p: {ext['extinct']}/20 extinct; p=2, D=0.5: {20 - per['extinct']}/20 survive"


@criterion(11, "Mating-rate algebra", 30)
def test_mating_algebra():
    rng = np.random.default_rng(11)
    p = CapabilityFunction.from_function(lambda x: 1.5 + np.tanh(x), 0.5, 2.5, "tanh")
    a = PreferenceFunction.gaussian(1.0, floor=0.05)
    worst_sr = worst_na = 0.0
    min_c = np.inf
    for _ in range(200):
        n = int(rng.integers(1, 501))
        x = rng.normal(rng.normal(), rng.uniform(0.1, 2.0), n)
        M = semirandom_matrix(x, p)
        worst_sr = max(worst_sr, np.max(np.abs(M.sum(axis=1) - p(x))))
        c = solve_mating_constants_discrete(x, a)
        R = normalized_matrix(x, a, c)
        worst_na = max(worst_na, np.max(np.abs(R.sum(axis=1) - 1.0)))
        min_c = min(min_c, c.c.min())
    assert worst_sr < 1e-12, f"semi-random row sums off by {worst_sr:.3g}"
    assert worst_na < 1e-9, f"normalized row sums off by {worst_na:.3g}"
    assert min_c > 0, f"nonpositive constant {min_c:.3g}"
    return f"row-sum errors {worst_sr:.1e} / {worst_na:.1e}, min constant {min_c:.3g}"


@criterion(12, "IBM to macro convergence trend", 600)
def test_convergence():
    grid = GridSpec.spanning(-12, 12, 1024)
    fam = ConvergenceFamily(MatingModel("semirandom_selfing", CapabilityFunction.constant(2.0)), GAUSS,
                            DemographyParams.constants(1.0, 1.0, 1.0), gaussian_cells(grid, 0.0, 1.0), 0.5)
    rep = ibm_macro_convergence(fam, [100, 1000, 10000], replicas=8, T=2.0, seed=12)
    d = rep.final_distances
    assert rep.strictly_decreasing, "final distances not strictly decreasing: " + ", ".join(f"{v:.3g}" for v in d)
    return "final W1 " + ", ".join(f"{v:.3f}" for v in d) + f" (slope {rep.slope:.2f})"


@criterion(13, "Determinism", 60)
def test_determinism(tmp_path):
    configs = {
        "ibm": """
mode: ibm
seed: 7
kernel: {family: additive, noise: {kind: gaussian, sigma: 1.0}}
mating: {capability: 2.0}
demography: {D: 1.0, I: 1.0, U: 1.0}
ibm: {N: 200, n0: 200, T: 2.0}
""",
        "normalized": """
mode: normalized
kernel: {family: multiplicative}
macro:
  T: 2.0
  initial: {kind: uniform, a: 0.0, b: 2.0}
  grid: {lower: 0.0, upper: 20.0, cells: 1024}
""",
        "analyze": """
mode: analyze
kernel: {family: additive, noise: {kind: gaussian, sigma: 1.0}}
analyze: {experiment: contraction, trials: 5}
""",
    }
    compared = 0
    for name, text in configs.items():
        cfg = cli.parse_config(text)
        a = cli.run(cfg, tmp_path / name / "a")
        b = cli.run(cfg, tmp_path / name / "b")
        assert a.exit_code == b.exit_code == 0, f"{name}: {a.error}"
        for f in a.files:
            assert (tmp_path / name / "a" / f).read_bytes() == (tmp_path / name / "b" / f).read_bytes(), f
            compared += 1
        ma = json.loads((tmp_path / name / "a" / "manifest.json").read_text())
        mb = json.loads((tmp_path / name / "b" / "manifest.json").read_text())
        ma.pop("wall_time"), mb.pop("wall_time")
        assert ma == mb, f"{name}: manifests differ"
    return f"{compared} output files byte-identical across reruns"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))

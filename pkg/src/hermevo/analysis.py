"""Experiment drivers: regimes, convergence, stability and operator checks.

Every driver is deterministic given its seed and returns a report
dataclass that serializes to JSON (``report.to_json()``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

from . import _lattice
from .demography import DemographyParams
from .ibm import IbmScenario, PopulationState, simulate
from .kernels import (
    AdditiveKernel,
    InterpolationLaw,
    InterpolativeKernel,
    MultiplicativeKernel,
    OffspringKernel,
    stationary_additive_profile,
    tjonwu_stationary_reference,
)
from .macroeq import (
    MacroScenario,
    SolverConfig,
    apply_P,
    default_grid,
    second_moment_of_P,
    solve_to_time,
)
from .mating import MatingModel
from .measures import (
    DiscreteMeasure,
    GridMeasure,
    GridSpec,
    l1_distance,
    mean,
    moment,
    wasserstein_1d,
)

EXTINCT, PERSISTENT, INDETERMINATE = "Extinct", "Persistent", "Indeterminate"
DECREASE_TOL = 1e-10


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _Report:
    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def strictly_decreasing(values, tol: float = DECREASE_TOL) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < tol))


# ---------------------------------------------------------------------------
# regimes


def classify_regime(p_upper: float, p_lower: float, D_upper: float, D_lower: float,
                    mating: str = "random") -> str:
    """Extinction/persistence from rate bounds.

    ``mating`` is ``"random"`` or ``"assortative"``; for assortative mating
    the per-capita birth rate is 1 and the capability bounds are ignored.
    """
    if mating == "assortative":
        p_upper = p_lower = 1.0
    elif mating != "random":
        raise ValueError("mating must be 'random' or 'assortative'")
    if D_lower >= p_upper:
        return EXTINCT
    if D_upper < p_lower:
        return PERSISTENT
    return INDETERMINATE


def classify_model(mating: MatingModel, demography: DemographyParams) -> str:
    kind = "assortative" if mating.is_assortative else "random"
    return classify_regime(mating.growth_upper(), mating.growth_lower(),
                           demography.D_bounds[1], demography.D_bounds[0], kind)


# ---------------------------------------------------------------------------
# random measures


def _bump_cells(kind: str, params, grid: GridSpec) -> np.ndarray:
    h = grid.spacing
    lo = grid.nodes - h / 2
    hi = grid.nodes + h / 2
    out = np.zeros(grid.n_cells)
    for w, a, b in params:
        if kind == "gaussian":
            out += w * (special.ndtr((hi - a) / b) - special.ndtr((lo - a) / b))
        else:
            out += w * (stats.gamma.cdf(np.maximum(hi, 0), a, scale=b)
                        - stats.gamma.cdf(np.maximum(lo, 0), a, scale=b))
    return out


def _bump_params(kind: str, q: float, rng: np.random.Generator, spread: float):
    k = int(rng.integers(2, 6))
    w = rng.dirichlet(np.ones(k))
    if kind == "gaussian":
        centers = rng.uniform(-spread, spread, k)
        sds = rng.uniform(0.2, 1.0, k) * spread / 2
        shift = q - np.dot(w, centers)
        return [(wi, c + shift, s) for wi, c, s in zip(w, centers, sds)]
    # shapes >= 3 and means within a factor 3 of each other keep the tails well inside [0, 20 q]
    shapes = rng.uniform(3.0, 8.0, k)
    means = rng.uniform(0.5, 1.5, k)
    scales = means / shapes
    factor = q / np.dot(w, means)
    return [(wi, a, s * factor) for wi, a, s in zip(w, shapes, scales)]


def random_grid_measure(kind: str, q: float, grid: GridSpec, rng: np.random.Generator,
                        spread: float = 2.0) -> GridMeasure:
    """Mixture of 2-5 gaussian (``kind="gaussian"``) or gamma bumps on a grid.

    Gaussian centres are shifted and gamma scales multiplied so that the
    mixture mean is ``q``; cell masses are integrated exactly and a final
    tilt makes the grid mean exactly ``q``.
    """
    params = _bump_params(kind, q, rng, spread)
    masses = _bump_cells(kind, params, grid)
    masses = masses / masses.sum()
    masses = _lattice.tilt_mean(masses, grid.nodes, q)
    return GridMeasure(grid.origin, grid.spacing, masses / grid.spacing)


def random_atomic_measure(kind: str, q: float, rng: np.random.Generator, n_atoms: int = 40,
                          spread: float = 2.0) -> DiscreteMeasure:
    """Atoms drawn from a random bump mixture, moved to have mean exactly ``q``."""
    params = _bump_params(kind, q, rng, spread)
    w = np.array([p[0] for p in params])
    comp = rng.choice(len(params), size=n_atoms, p=w)
    if kind == "gaussian":
        x = np.array([rng.normal(params[c][1], params[c][2]) for c in comp])
        x = x + (q - x.mean())
    else:
        x = np.array([rng.gamma(params[c][1], params[c][2]) for c in comp])
        x = x * (q / x.mean())
    weights = rng.dirichlet(np.ones(n_atoms))
    x = x + (q - np.dot(weights, x)) if kind == "gaussian" else x * (q / np.dot(weights, x))
    return DiscreteMeasure(x, weights)


def _family_kind(kernel: OffspringKernel) -> str:
    if isinstance(kernel, MultiplicativeKernel):
        return "gamma"
    return "gaussian"


# ---------------------------------------------------------------------------
# contraction and moment bounds


@dataclass
class ContractionReport(_Report):
    family: str
    q: float
    trials: int
    ratios: list
    skipped: int
    all_contract: bool
    max_ratio: float
    histogram: dict
    translated: dict | None = None


def contraction_sampler(kernel: OffspringKernel, q: float, trials: int = 100, seed: int = 0,
                        grid: GridSpec | None = None, check_translated: bool = False) -> ContractionReport:
    """Sample equal-mean pairs and compare ``d(P mu, P nu)`` with ``d(mu, nu)``."""
    rng = np.random.default_rng(seed)
    grid = grid or default_grid(kernel, q, 2048)
    kind = _family_kind(kernel)
    ratios = []
    skipped = 0
    for _ in range(trials):
        mu = random_grid_measure(kind, q, grid, rng)
        nu = random_grid_measure(kind, q, grid, rng)
        d0 = wasserstein_1d(mu, nu)
        if d0 == 0:
            skipped += 1
            continue
        d1 = wasserstein_1d(apply_P(kernel, mu), apply_P(kernel, nu))
        ratios.append(d1 / d0)
    r = np.array(ratios)
    counts, edges = np.histogram(r, bins=10, range=(0.0, 1.0)) if r.size else (np.zeros(10), np.linspace(0, 1, 11))
    translated = None
    if check_translated and isinstance(kernel, AdditiveKernel):
        mu = random_grid_measure(kind, q, grid, rng)
        shifted = random_grid_measure(kind, q + 1.0, grid, rng)
        d0 = wasserstein_1d(mu, shifted)
        d1 = wasserstein_1d(apply_P(kernel, mu), apply_P(kernel, shifted))
        translated = {"d_before": d0, "d_after": d1, "ratio": d1 / d0}
    return ContractionReport(kernel.family, q, trials, ratios, skipped, bool(np.all(r < 1.0)),
                             float(r.max()) if r.size else float("nan"),
                             {"edges": edges.tolist(), "counts": counts.tolist()}, translated)


def lyapunov_constants(kernel: OffspringKernel, q: float) -> tuple[float, float]:
    """``(C, L)`` with ``int z^2 dP mu <= C + L int x^2 dmu`` for mean-``q`` measures."""
    if isinstance(kernel, AdditiveKernel):
        return kernel.noise.second_moment + q * q / 2, 0.5
    if isinstance(kernel, MultiplicativeKernel):
        ez2 = kernel.noise.second_moment
        return 2 * ez2 * q * q, 2 * ez2
    raise TypeError("moment bounds are provided for the additive and multiplicative families")


@dataclass
class LyapunovReport(_Report):
    family: str
    q: float
    C: float
    L: float
    trials: int
    lhs: list
    rhs: list
    all_hold: bool
    max_relative_excess: float
    grid_max_relative_excess: float | None = None


def moment_lyapunov_check(kernel: OffspringKernel, q: float, trials: int = 100, seed: int = 0,
                          rtol: float = 1e-12, include_dirac: bool = True,
                          grid_trials: int = 0) -> LyapunovReport:
    """Check the affine second-moment bound on random atomic measures.

    The second moment of ``P mu`` is computed exactly from the pair sums.
    The bound is attained with equality for both families, so it is
    checked up to relative roundoff ``rtol``. ``grid_trials`` also runs
    the lattice route on grid measures and records its largest relative
    excess (a discretization effect of order ``h^2``).
    """
    C, L = lyapunov_constants(kernel, q)
    rng = np.random.default_rng(seed)
    kind = _family_kind(kernel)
    lhs, rhs = [], []
    measures = [random_atomic_measure(kind, q, rng) for _ in range(trials)]
    if include_dirac:
        measures.append(DiscreteMeasure.dirac(q))
    for mu in measures:
        lhs.append(second_moment_of_P(kernel, mu))
        rhs.append(C + L * moment(mu, 2))
    lhs_a, rhs_a = np.array(lhs), np.array(rhs)
    excess = (lhs_a - rhs_a) / np.maximum(np.abs(rhs_a), 1e-300)
    grid_excess = None
    if grid_trials:
        grid = default_grid(kernel, q, 2048)
        worst = -np.inf
        for _ in range(grid_trials):
            mu = random_grid_measure(kind, q, grid, rng)
            val = moment(apply_P(kernel, mu), 2)
            bound = C + L * moment(mu, 2)
            worst = max(worst, (val - bound) / bound)
        grid_excess = float(worst)
    return LyapunovReport(kernel.family, q, C, L, len(measures), lhs, rhs, bool(np.all(excess <= rtol)),
                          float(excess.max()), grid_excess)


# ---------------------------------------------------------------------------
# stability of the normalized flow


@dataclass
class StabilityReport(_Report):
    label: str
    times: list
    distances: list
    final_distance: float
    final_l1: float | None
    decay_rate: float
    strictly_decreasing: bool
    passed: bool


@dataclass
class StabilityExperiment(_Report):
    family: str
    q: float
    T: float
    threshold: float
    reports: list
    cross_distances: list = field(default_factory=list)
    cross_decreasing: bool = True

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports) and self.cross_decreasing


def stationary_reference(kernel: OffspringKernel, q: float, grid: GridSpec) -> GridMeasure:
    """Stationary profile of the normalized flow on ``grid``."""
    if isinstance(kernel, AdditiveKernel):
        return stationary_additive_profile(kernel.noise, q, 16, grid)
    if isinstance(kernel, MultiplicativeKernel) and kernel.is_uniform:
        return tjonwu_stationary_reference(q, grid)
    raise ValueError("no closed-form stationary profile for this kernel")


def _fit_rate(t, y) -> float:
    t, y = np.asarray(t, float), np.asarray(y, float)
    keep = y > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(t[keep], np.log(y[keep]), 1)[0])


def stability_experiment(kernel: OffspringKernel, initials: dict, T: float, q: float | None = None,
                         grid: GridSpec | None = None, dt: float = 0.05, snapshot_every: float | None = None,
                         threshold: float = 1e-2, metric: str = "wasserstein") -> StabilityExperiment:
    """Run the normalized flow from several initials with a common mean.

    ``initials`` maps labels to measures. Each run logs the Wasserstein
    distance to the stationary profile at every snapshot; it passes when
    the distances decrease strictly (up to ``1e-10``) and the final
    distance (``metric``: ``"wasserstein"`` or ``"l1"``) is below
    ``threshold``. The first two initials are also compared with each
    other along the flow.
    """
    first = next(iter(initials.values()))
    q = mean(first) if q is None else q
    grid = grid or default_grid(kernel, q)
    ref = stationary_reference(kernel, q, grid)
    sc = MacroScenario(kernel, config=SolverConfig(dt=dt, grid=grid, horizon=T))
    every = snapshot_every or T / 200
    reports = []
    finals = []
    for label, mu0 in initials.items():
        if abs(mean(mu0) - q) > 1e-9 * max(1.0, abs(q)):
            raise ValueError(f"initial {label!r} does not have mean {q}")
        traj = solve_to_time(mu0, sc, T, reference=ref, snapshot_every=every)
        d = traj.distances
        final = traj.final.measure
        l1 = l1_distance(final, ref)
        final_metric = l1 if metric == "l1" else float(d[-1])
        dec = strictly_decreasing(d)
        half = traj.times >= T / 2
        reports.append(StabilityReport(label, traj.times.tolist(), d.tolist(), float(d[-1]), l1,
                                       _fit_rate(traj.times[half], d[half]), dec,
                                       bool(dec and final_metric < threshold)))
        finals.append(traj)
    cross, cross_ok = [], True
    if len(finals) >= 2:
        a, b = finals[0], finals[1]
        cross = [wasserstein_1d(sa.measure, sb.measure) for sa, sb in zip(a.states, b.states)]
        cross_ok = strictly_decreasing(cross)
    return StabilityExperiment(kernel.family, q, T, threshold, reports, cross, cross_ok)


# ---------------------------------------------------------------------------
# variance decay for the interpolative kernel


@dataclass
class VarianceDecayReport(_Report):
    var_Z: float
    expected_rate: float
    fitted_rate: float
    relative_error: float
    final_distance_to_q: float
    times: list
    variances: list
    passed: bool


def variance_decay_check(law: InterpolationLaw, initial: DiscreteMeasure, T: float, dt: float = 0.05,
                         bins: int = 50, rtol: float = 0.05, dist_tol: float = 1e-2,
                         snapshot_every: float = 0.5) -> VarianceDecayReport:
    """Fit the exponential decay rate of the variance along the atomic flow.

    The fit is least squares on log-variance over the second half of the
    run; it passes when the rate is within ``rtol`` of
    ``-(1 - Var Z) / 2`` and ``d(mu_T, delta_q) < dist_tol``.
    """
    kernel = InterpolativeKernel(law)
    sc = MacroScenario(kernel, representation="atoms",
                       config=SolverConfig(dt=dt, horizon=T, compress_bins=bins))
    q = mean(initial)
    traj = solve_to_time(initial, sc, T, reference=DiscreteMeasure.dirac(q), snapshot_every=snapshot_every)
    t = traj.times
    v = np.array([s.variance for s in traj.states])
    expected = -0.5 * (1.0 - law.variance)
    if v[0] == 0:
        ok = bool(np.all(v == 0))
        return VarianceDecayReport(law.variance, expected, float("nan"), 0.0, 0.0, t.tolist(), v.tolist(), ok)
    half = t >= T / 2
    rate = _fit_rate(t[half], v[half])
    rel = abs(rate - expected) / abs(expected)
    dist = float(traj.distances[-1])
    return VarianceDecayReport(law.variance, expected, rate, rel, dist, t.tolist(), v.tolist(),
                               bool(rel < rtol and dist < dist_tol))


# ---------------------------------------------------------------------------
# IBM versus macroscopic solution


@dataclass(frozen=True)
class ConvergenceFamily:
    """A matched pair of IBM and macroscopic scenarios indexed by ``N``.

    ``initial`` is the initial law as a probability grid density; the IBM
    starts from ``round(initial_mass * N)`` traits drawn from it and the
    macroscopic flow from ``initial_mass * initial``.
    """

    mating: MatingModel
    kernel: OffspringKernel
    demography: DemographyParams
    initial: GridMeasure
    initial_mass: float = 1.0
    dt: float = 0.05

    def sample_initial(self, n: int, rng: np.random.Generator) -> np.ndarray:
        m = self.initial.masses
        cells = rng.choice(m.size, size=n, p=m / m.sum())
        return self.initial.nodes[cells] + (rng.random(n) - 0.5) * self.initial.spacing

    def ibm(self, N: int, T: float, seed: int, snapshot_every: float) -> IbmScenario:
        rng = np.random.default_rng([seed, N, 1])
        n0 = int(round(self.initial_mass * N))
        init = PopulationState(self.sample_initial(n0, rng))
        return IbmScenario(self.mating, self.kernel, self.demography, init, T, N, seed,
                           snapshot_every=snapshot_every, record_events=False)

    def macro(self, T: float) -> MacroScenario:
        cfg = SolverConfig(dt=self.dt, scheme="explicit_euler", grid=self.initial.grid, horizon=T)
        return MacroScenario(self.kernel, self.mating, self.demography, config=cfg)


@dataclass
class ConvergenceReport(_Report):
    N: list
    replicas: int
    times: list
    distances: list
    final_distances: list
    mass_errors: list
    spread: list
    slope: float
    strictly_decreasing: bool
    within_noise: bool


def _replica_mean(traces, k: int) -> DiscreteMeasure:
    """Average of the normalized empirical measures of surviving replicas."""
    xs, ws = [], []
    alive = [tr for tr in traces if tr.snapshots[k].size > 0]
    for tr in alive:
        x = tr.snapshots[k].traits
        xs.append(x)
        ws.append(np.full(x.size, 1.0 / (x.size * len(alive))))
    if not xs:
        return DiscreteMeasure()
    return DiscreteMeasure(np.concatenate(xs), np.concatenate(ws))


def ibm_macro_convergence(family: ConvergenceFamily, N_list, replicas: int, T: float, seed: int = 0,
                          n_times: int = 10) -> ConvergenceReport:
    """Distance between replica-averaged IBM profiles and the macroscopic solution.

    Both sides are normalized to probability measures before the
    Wasserstein distance is taken (the distance needs equal masses); the
    relative error of the mean scaled mass is reported separately.
    """
    N_list = [int(n) for n in N_list]
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N values must be strictly increasing")
    every = T / n_times
    mu0 = family.initial.scaled(family.initial_mass)
    traj = solve_to_time(mu0, family.macro(T), T, snapshot_every=every)
    macro_states = traj.states
    distances, finals, mass_err, spread = [], [], [], []
    for N in N_list:
        traces = [simulate(family.ibm(N, T, seed + r, every)) for r in range(replicas)]
        row = []
        for k, ms in enumerate(macro_states):
            emp = _replica_mean(traces, k)
            row.append(wasserstein_1d(emp, ms.measure.normalized()) if emp.mass > 0 else float("nan"))
        distances.append(row)
        finals.append(row[-1])
        ref = macro_states[-1].measure.normalized()
        ind = [wasserstein_1d(DiscreteMeasure(tr.snapshots[-1].traits).normalized(), ref)
               for tr in traces if tr.snapshots[-1].size > 0]
        spread.append(float(np.std(ind) / np.sqrt(max(len(ind), 1))))
        masses = [tr.snapshots[-1].size / N for tr in traces]
        mass_err.append(abs(np.mean(masses) - macro_states[-1].mass) / macro_states[-1].mass)
    f = np.array(finals)
    slope = float(np.polyfit(np.log(N_list), np.log(f), 1)[0]) if len(N_list) > 1 else float("nan")
    dec = strictly_decreasing(f, tol=0.0)
    noise_ok = bool(np.all(np.diff(f) < 2 * np.array(spread[:-1])))
    return ConvergenceReport(N_list, replicas, [s.t for s in macro_states], distances, finals, mass_err,
                             spread, slope, dec, noise_ok)


def ibm_extinction_experiment(mating: MatingModel, kernel: OffspringKernel, demography: DemographyParams,
                              initial: PopulationState, N: int, T: float, replicas: int = 20,
                              seed: int = 0) -> dict:
    """Count extinctions before ``T`` over independent replicas."""
    outcomes = []
    for r in range(replicas):
        sc = IbmScenario(mating, kernel, demography, initial, T, N, seed + r,
                         snapshot_every=T, record_events=False)
        tr = simulate(sc)
        outcomes.append(tr.extinction_time)
    extinct = [t is not None for t in outcomes]
    return {"predicted": classify_model(mating, demography), "replicas": replicas,
            "extinct": int(sum(extinct)), "extinction_times": [t for t in outcomes if t is not None]}

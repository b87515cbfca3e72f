"""Deterministic solvers for the macroscopic population equation.

Two flows are provided:

* the full equation, births ``m(x,y;mu) K(x,y,dz) mu(dx) mu(dy)`` minus deaths
  ``(D(z) + I(z) int U(z,y) mu(dy)) mu(dz)``, stepped with explicit Euler on
  a grid;
* the normalized flow ``mu' = P mu - mu`` on probability measures, stepped
  with exponential Euler, ``mu <- e^{-dt} mu + (1 - e^{-dt}) P mu``.

The birth operator ``P`` works on grid densities (lattice pmfs at the cell
centres) and on atomic measures. All lattice operations conserve mass and
first moment up to what leaks off the grid; the first moment is restored
exactly after renormalization.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _lattice
from .demography import DemographyParams
from .kernels import (
    AdditiveKernel,
    GridOverflow,
    InterpolativeKernel,
    MultiplicativeKernel,
    OffspringKernel,
)
from .measures import (
    REAL_LINE,
    DiscreteMeasure,
    GridMeasure,
    GridSpec,
    MassMismatch,
    Measure,
    TraitDomain,
    deposit,
    grid_from_atoms,
    mean,
    moment,
    save,
    wasserstein_1d,
)
from .mating import MatingModel

PROB_TOL = 1e-6
LEAK_TOL = 1e-6
CLIP_TOL = 1e-8
DEFAULT_CELLS = 4096
MIN_CELLS = 64
_CHUNK = 1 << 22


class StabilityViolation(RuntimeError):
    """An explicit step would lose positivity beyond tolerance."""


class ExtinctionRegime(ValueError):
    """Constant rates with ``D >= p``: no positive carrying capacity exists."""


# ---------------------------------------------------------------------------
# grids


def default_grid(kernel: OffspringKernel, q: float, n_cells: int = DEFAULT_CELLS) -> GridSpec:
    """Default grid for a kernel family around mean ``q``.

    Additive: ``q +- 12 sqrt(2) sigma``; multiplicative: ``[0, 20 q]``;
    interpolative: ``q +- 4`` (the flow contracts toward ``q``).
    """
    if isinstance(kernel, AdditiveKernel):
        half = 12.0 * math.sqrt(2.0 * kernel.noise.variance)
        return GridSpec.spanning(q - half, q + half, n_cells)
    if isinstance(kernel, MultiplicativeKernel):
        if not q > 0:
            raise ValueError("multiplicative grids need a positive mean")
        return GridSpec.spanning(0.0, 20.0 * q, n_cells)
    return GridSpec.spanning(q - 4.0, q + 4.0, n_cells)


def _noise_pmf(kernel: AdditiveKernel, grid: GridSpec) -> np.ndarray:
    cache = kernel.__dict__.setdefault("_pmf_cache", {})
    key = (grid.spacing, grid.n_cells)
    if key not in cache:
        J = grid.n_cells - 1
        offsets = np.arange(-J, J + 1, dtype=float)
        g = kernel.noise.lattice_pmf(grid.spacing, offsets)
        cache[key] = _lattice.tilt_mean(g / g.sum(), offsets, 0.0)
    return cache[key]


def _check_origin_zero(grid: GridSpec):
    if abs(grid.origin) > 1e-12 * grid.spacing:
        raise ValueError("the multiplicative kernel needs a grid whose first node is 0")


# ---------------------------------------------------------------------------
# pair sums on a lattice


def _sum_pmf_product(v: np.ndarray) -> np.ndarray:
    """Pmf over ``i + j`` of the pair weights ``v_i v_j``."""
    return _lattice.convolve(v, v)


def _sum_pmf_matrix(W: np.ndarray) -> np.ndarray:
    n = W.shape[0]
    idx = np.add.outer(np.arange(n), np.arange(n)).ravel()
    return np.bincount(idx, weights=W.ravel(), minlength=2 * n - 1)


def _pair_mean(nodes: np.ndarray, kind: str, data: np.ndarray) -> float:
    """Mean of ``(x + y)/2`` under the (unnormalized) pair weights."""
    if kind == "product":
        tot = data.sum()
        return float(np.dot(nodes, data) / tot) if tot > 0 else 0.0
    rows, cols = data.sum(axis=1), data.sum(axis=0)
    tot = rows.sum()
    return float(0.5 * (np.dot(nodes, rows) + np.dot(nodes, cols)) / tot) if tot > 0 else 0.0


def _additive_from_midpoints(kernel: AdditiveKernel, mid: np.ndarray, grid: GridSpec):
    n = grid.n_cells
    out = _lattice.convolve(mid, _noise_pmf(kernel, grid))[n - 1: 2 * n - 1]
    return out, max(float(mid.sum() - out.sum()), 0.0)


def _multiplicative_from_sums(kernel: MultiplicativeKernel, s: np.ndarray, grid: GridSpec):
    """Hat projection of ``S Z`` for a pmf ``s`` over ``S = k h`` (``k < len(s)``)."""
    n = grid.n_cells
    total = float(s.sum())
    if kernel.is_uniform:
        # Z uniform: the node weights of S Z = k h Z are 1/k inside, 1/(2k) at 0 and k
        k = np.arange(s.size, dtype=float)
        r = np.zeros_like(s)
        r[1:] = s[1:] / k[1:]
        tail = np.cumsum(r[::-1])[::-1] - r
        out = tail + 0.5 * r
        out[0] = s[0] + 0.5 * tail[0]
        out = out[:n]
    else:
        out = np.zeros(n)
        out[0] += s[0]
        noise = kernel.noise
        for k in np.nonzero(s[1:] > 0)[0] + 1:
            j = np.arange(min(k, n - 1) + 1, dtype=float)
            w = _lattice.hat_projection(noise.cdf, noise.partial_mean, j / k, 1.0 / k)
            out[: j.size] += s[k] * w
    return out, max(total - float(out.sum()), 0.0)


def _interp_atoms(kernel: InterpolativeKernel, x: np.ndarray, w: np.ndarray, pair=None):
    """Yield (positions, weights) chunks of the atomic image of the pair weights."""
    z, pz = kernel.law.values, kernel.law.weights
    n = x.size
    rows = max(1, _CHUNK // max(1, n * z.size))
    for start in range(0, n, rows):
        sl = slice(start, min(n, start + rows))
        if pair is None:
            W = np.outer(w[sl], w)
        else:
            W = pair[sl]
        m = 0.5 * (x[sl, None] + x[None, :])
        r = 0.5 * np.abs(x[sl, None] - x[None, :])
        keep = W > 0
        m, r, W = m[keep], r[keep], W[keep]
        pos = m[:, None] + r[:, None] * z[None, :]
        yield pos.ravel(), (W[:, None] * pz[None, :]).ravel()


def _birth_on_grid(kernel: OffspringKernel, grid: GridSpec, kind: str, data: np.ndarray):
    """Unnormalized offspring masses on ``grid`` for lattice pair weights.

    ``kind``/``data`` are ``"product", v`` (weights ``v_i v_j``) or
    ``"matrix", W``. Returns ``(masses, leaked, target_mean)``.
    """
    nodes = grid.nodes
    target = _pair_mean(nodes, kind, data)
    if isinstance(kernel, AdditiveKernel):
        s = _sum_pmf_product(data) if kind == "product" else _sum_pmf_matrix(data)
        out, leaked = _additive_from_midpoints(kernel, _lattice.halve_lattice(s), grid)
    elif isinstance(kernel, MultiplicativeKernel):
        _check_origin_zero(grid)
        s = _sum_pmf_product(data) if kind == "product" else _sum_pmf_matrix(data)
        out, leaked = _multiplicative_from_sums(kernel, s, grid)
    elif isinstance(kernel, InterpolativeKernel):
        out = np.zeros(grid.n_cells)
        leaked = 0.0
        w = data if kind == "product" else None
        pair = None if kind == "product" else data
        for pos, wt in _interp_atoms(kernel, nodes, w if w is not None else np.ones_like(nodes), pair):
            masses, lk = deposit(pos, wt, grid.origin, grid.spacing, grid.n_cells, strict=False)
            out += masses
            leaked += lk
    else:
        raise TypeError(f"unsupported kernel {kernel!r}")
    return out, leaked, target


def _birth_atoms_on_grid(kernel: OffspringKernel, mu: DiscreteMeasure, grid: GridSpec):
    x, w = mu.positions, mu.weights
    target = float(np.dot(x, w) / w.sum())
    if isinstance(kernel, InterpolativeKernel):
        out = np.zeros(grid.n_cells)
        leaked = 0.0
        for pos, wt in _interp_atoms(kernel, x, w):
            masses, lk = deposit(pos, wt, grid.origin, grid.spacing, grid.n_cells, strict=False)
            out += masses
            leaked += lk
        return out, leaked, target
    pairs_w = np.outer(w, w).ravel()
    if isinstance(kernel, AdditiveKernel):
        mids = 0.5 * np.add.outer(x, x).ravel()
        mid, lk = deposit(mids, pairs_w, grid.origin, grid.spacing, grid.n_cells, strict=False)
        out, leaked = _additive_from_midpoints(kernel, mid, grid)
        return out, leaked + lk, target
    if isinstance(kernel, MultiplicativeKernel):
        _check_origin_zero(grid)
        sums = np.add.outer(x, x).ravel()
        s, lk = deposit(sums, pairs_w, 0.0, grid.spacing, 2 * grid.n_cells - 1, strict=False)
        out, leaked = _multiplicative_from_sums(kernel, s, grid)
        return out, leaked + lk, target
    raise TypeError(f"unsupported kernel {kernel!r}")


def _finish(masses: np.ndarray, nodes: np.ndarray, total_in: float, leaked: float,
            target: float, leak_tol: float):
    if total_in > 0 and leaked / total_in > leak_tol:
        raise GridOverflow(f"birth operator leaked {leaked / total_in:.3g} of its mass off the grid",
                           leaked / total_in)
    mass = masses.sum()
    if mass <= 0:
        return masses, 0.0
    drift = 1.0 - mass / total_in
    masses = masses / mass
    if np.count_nonzero(masses) > 1:
        masses = _lattice.tilt_mean(masses, nodes, target)
    return masses, drift


def apply_P(kernel: OffspringKernel, mu: Measure, grid: GridSpec | None = None,
            leak_tol: float = LEAK_TOL, return_info: bool = False):
    """Birth operator ``(P mu)(A) = int int K(x, y, A) mu(dx) mu(dy)``.

    Args:
        kernel: Offspring kernel.
        mu: Probability measure (mass 1 within ``1e-6``).
        grid: Output grid. Defaults to ``mu``'s own grid for grid input,
            and to :func:`default_grid` for atomic input to a density kernel.
        leak_tol: Largest admissible fraction of mass pushed off the grid.
        return_info: Also return ``{"leaked", "drift"}``.

    Returns:
        ``P mu`` as a probability measure with the first moment of ``mu``.
        Atomic input to the interpolative kernel stays atomic when no grid
        is given; everything else is a :class:`GridMeasure`.

    Raises:
        GridOverflow: More than ``leak_tol`` of the mass left the grid.
    """
    total = mu.mass
    if abs(total - 1.0) > PROB_TOL:
        raise MassMismatch(f"apply_P needs a probability measure (mass {total!r})")
    info = {"leaked": 0.0, "drift": 0.0}
    if isinstance(mu, DiscreteMeasure):
        if len(mu) == 0:
            raise MassMismatch("apply_P of the zero measure")
        if isinstance(kernel, InterpolativeKernel) and grid is None:
            out = interpolative_atoms(kernel, mu)
            return (out, info) if return_info else out
        grid = grid or default_grid(kernel, mean(mu))
        masses, leaked, target = _birth_atoms_on_grid(kernel, mu, grid)
    else:
        if grid is not None and grid != mu.grid:
            mu = grid_from_atoms(DiscreteMeasure(mu.nodes, mu.masses), grid.origin, grid.spacing, grid.n_cells)
        grid = mu.grid
        masses, leaked, target = _birth_on_grid(kernel, grid, "product", mu.masses)
    masses, drift = _finish(masses, grid.nodes, total * total, leaked, target, leak_tol)
    info.update(leaked=leaked / (total * total), drift=drift)
    out = GridMeasure(grid.origin, grid.spacing, masses * (total * total) / grid.spacing).normalized()
    return (out, info) if return_info else out


def interpolative_atoms(kernel: InterpolativeKernel, mu: DiscreteMeasure) -> DiscreteMeasure:
    """Atom-to-atom image of ``mu`` under the interpolative kernel, normalized."""
    chunks = list(_interp_atoms(kernel, mu.positions, mu.weights))
    pos = np.concatenate([c[0] for c in chunks])
    wt = np.concatenate([c[1] for c in chunks])
    return DiscreteMeasure(pos, wt).normalized()


def second_moment_of_P(kernel: OffspringKernel, mu: DiscreteMeasure) -> float:
    """Exact ``int z^2 (P mu)(dz)`` for an atomic probability measure."""
    x, w = mu.positions, mu.weights
    s = np.add.outer(x, x)
    W = np.outer(w, w)
    if isinstance(kernel, AdditiveKernel):
        ez2 = kernel.noise.second_moment
        vals = 0.25 * s * s + ez2
    elif isinstance(kernel, MultiplicativeKernel):
        vals = s * s * kernel.noise.second_moment
    elif isinstance(kernel, InterpolativeKernel):
        r = 0.5 * np.abs(np.subtract.outer(x, x))
        vals = 0.25 * s * s + kernel.law.variance * r * r
    else:
        raise TypeError(f"unsupported kernel {kernel!r}")
    return float(np.sum(W * vals) / w.sum() ** 2)


# ---------------------------------------------------------------------------
# atom compression


def compress_atoms(mu: DiscreteMeasure, bins: int) -> DiscreteMeasure:
    """Reduce an atomic measure to at most ``2 * bins`` atoms.

    Atoms are grouped into equal-width bins; each bin with more than two
    atoms is replaced by two atoms at its mean plus and minus its standard
    deviation, each carrying half the bin mass. Mass, mean and variance are
    unchanged.
    """
    if len(mu) <= 2 * bins:
        return mu
    x, w = mu.positions, mu.weights
    lo, hi = x[0], x[-1]
    b = np.minimum(((x - lo) / (hi - lo) * bins).astype(np.int64), bins - 1)
    mass = np.bincount(b, weights=w, minlength=bins)
    keep = mass > 0
    m1 = np.bincount(b, weights=w * x, minlength=bins)[keep] / mass[keep]
    m2 = np.bincount(b, weights=w * x * x, minlength=bins)[keep] / mass[keep]
    sd = np.sqrt(np.maximum(m2 - m1 * m1, 0.0))
    half = 0.5 * mass[keep]
    return DiscreteMeasure(np.concatenate([m1 - sd, m1 + sd]), np.concatenate([half, half]))


# ---------------------------------------------------------------------------
# scenario types


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping and discretization settings."""

    dt: float = 0.05
    scheme: str = "exponential_euler"
    grid: GridSpec | None = None
    leak_tol: float = LEAK_TOL
    horizon: float = 10.0
    snapshot_every: float | None = None
    compress_bins: int = 64

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("exponential_euler", "explicit_euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.grid is not None and self.grid.n_cells < MIN_CELLS:
            raise ValueError(f"grids need at least {MIN_CELLS} cells")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def snapshot_interval(self) -> float:
        return self.snapshot_every if self.snapshot_every else self.horizon / 200


@dataclass(frozen=True)
class MacroScenario:
    """A macroscopic problem. Without ``mating`` the normalized flow is solved."""

    kernel: OffspringKernel
    mating: MatingModel | None = None
    demography: DemographyParams | None = None
    domain: TraitDomain = REAL_LINE
    representation: str = "grid"
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.representation not in ("grid", "atoms"):
            raise ValueError("representation must be 'grid' or 'atoms'")
        if self.mating is not None:
            if self.demography is None:
                raise ValueError("the full equation needs demography parameters")
            if self.representation != "grid":
                raise ValueError("the full equation is solved on grids only")
        elif self.representation == "atoms" and not isinstance(self.kernel, InterpolativeKernel):
            raise ValueError("atomic flows need the interpolative kernel")

    @property
    def normalized(self) -> bool:
        return self.mating is None


@dataclass(frozen=True)
class FlowState:
    """A point of a trajectory with its diagnostics."""

    t: float
    measure: Measure
    mass: float
    mean: float
    second_moment: float
    leak: float = 0.0
    clipped: float = 0.0
    distance: float | None = None

    @classmethod
    def of(cls, t: float, measure: Measure, leak: float = 0.0, clipped: float = 0.0,
           reference: Measure | None = None) -> "FlowState":
        mass = measure.mass
        if mass > 0:
            m1 = mean(measure)
            m2 = moment(measure, 2) / mass
        else:
            m1 = m2 = 0.0
        dist = None
        if reference is not None and mass > 0:
            dist = wasserstein_1d(measure, reference)
        return cls(float(t), measure, float(mass), float(m1), float(m2), float(leak), float(clipped), dist)

    @property
    def variance(self) -> float:
        return max(self.second_moment - self.mean**2, 0.0)


# ---------------------------------------------------------------------------
# full equation


def carrying_capacity(p: float, D: float, I: float, U: float, assortative: bool = False) -> float:
    """Limit mass ``(p - D) / (I U)`` of the constant-rate logistic equation.

    Assortative mating has unit per-capita birth rate, so ``p`` is taken
    as 1 there.
    """
    if assortative:
        p = 1.0
    if not (I > 0 and U > 0):
        raise ValueError("I and U must be positive")
    if D >= p:
        raise ExtinctionRegime(f"D = {D} >= p = {p}: the population goes extinct")
    return (p - D) / (I * U)


def logistic_mass(t, m0: float, p: float, D: float, I: float, U: float):
    """Closed-form solution of ``M' = M (p - D - I U M)``."""
    t = np.asarray(t, dtype=float)
    r, a = p - D, I * U
    if m0 == 0:
        return np.zeros_like(t)
    if r == 0:
        return m0 / (1.0 + a * m0 * t)
    return r / (a + (r / m0 - a) * np.exp(-r * t))


def _require_grid(mu):
    if not isinstance(mu, GridMeasure):
        raise TypeError("the full equation is solved on grid measures")


def rhs_full(state: FlowState | GridMeasure, scenario: MacroScenario, return_info: bool = False):
    """Node-mass increment ``births - deaths`` of the full equation.

    Returns an array of node masses per unit time on the state's grid
    (signed), or ``(increment, {"leaked": ...})`` with ``return_info``.
    """
    mu = state.measure if isinstance(state, FlowState) else state
    _require_grid(mu)
    grid = mu.grid
    m = mu.masses
    total = m.sum()
    if total <= 0:
        out = np.zeros_like(m)
        return (out, {"leaked": 0.0}) if return_info else out
    kind, data = scenario.mating.pair_weights(grid.nodes, m)
    births, leaked, target = _birth_on_grid(scenario.kernel, grid, kind, data)
    pair_total = float(data.sum() ** 2) if kind == "product" else float(data.sum())
    if pair_total > 0 and leaked / pair_total > scenario.config.leak_tol:
        raise GridOverflow(f"births leaked {leaked / pair_total:.3g} of their mass off the grid",
                           leaked / pair_total)
    bsum = births.sum()
    if bsum > 0 and np.count_nonzero(births) > 1:
        births = _lattice.tilt_mean(births, grid.nodes, target)
    dem = scenario.demography
    x = grid.nodes
    death_rate = dem.death(x) + dem.interaction(x) * dem.competition_field(x, x, m)
    out = births - death_rate * m
    return (out, {"leaked": leaked}) if return_info else out


def stability_bound(scenario: MacroScenario, mass: float) -> float:
    dem = scenario.demography
    return scenario.config.dt * (dem.D_bounds[1] + dem.I_bounds[1] * dem.U_bounds[1] * mass
                                 + scenario.mating.rate_bound())


def step_full(state: FlowState, scenario: MacroScenario, reference: Measure | None = None) -> FlowState:
    """One explicit Euler step of the full equation.

    Raises:
        StabilityViolation: ``dt (D_bar + I_bar U_bar mass + m_bar) >= 1`` or
            the step clipped more than ``1e-8`` of negative mass.
    """
    mu = state.measure
    _require_grid(mu)
    if mu.mass <= 0:
        return FlowState.of(state.t + scenario.config.dt, mu)
    bound = stability_bound(scenario, mu.mass)
    if bound >= 1:
        raise StabilityViolation(f"dt too large for explicit Euler (bound {bound:.3g} >= 1)")
    inc, info = rhs_full(mu, scenario, return_info=True)
    new = mu.masses + scenario.config.dt * inc
    neg = new < 0
    clipped = float(-new[neg].sum())
    if clipped > CLIP_TOL:
        raise StabilityViolation(f"explicit step clipped {clipped:.3g} of negative mass")
    new[neg] = 0.0
    out = mu.with_masses(new)
    return FlowState.of(state.t + scenario.config.dt, out, state.leak + scenario.config.dt * info["leaked"],
                        state.clipped + clipped, reference)


# ---------------------------------------------------------------------------
# normalized flow


def step_normalized(state: FlowState, kernel: OffspringKernel, dt: float, grid: GridSpec | None = None,
                    leak_tol: float = LEAK_TOL, compress_bins: int | None = None,
                    reference: Measure | None = None) -> FlowState:
    """Exponential Euler step ``mu <- e^{-dt} mu + (1 - e^{-dt}) P mu``.

    Grid states stay on their grid. Atomic states (interpolative kernel)
    stay atomic and are compressed to ``2 * compress_bins`` atoms when
    given, which keeps mass, mean and variance.
    """
    mu = state.measure
    decay = math.exp(-dt)
    if isinstance(mu, DiscreteMeasure):
        if not isinstance(kernel, InterpolativeKernel) or grid is not None:
            raise TypeError("atomic normalized flows need the interpolative kernel; deposit on a grid")
        Pmu = interpolative_atoms(kernel, mu)
        out = DiscreteMeasure(np.concatenate([mu.positions, Pmu.positions]),
                              np.concatenate([decay * mu.weights, (1 - decay) * Pmu.weights]))
        if compress_bins:
            out = compress_atoms(out, compress_bins)
        return FlowState.of(state.t + dt, out, state.leak, reference=reference)
    Pmu, info = apply_P(kernel, mu, leak_tol=leak_tol, return_info=True)
    q = mean(mu)
    vals = decay * mu.values + (1 - decay) * Pmu.values
    out = mu.with_values(vals / (mu.spacing * vals.sum()))
    if np.count_nonzero(out.values) > 1:
        out = out.with_masses(_lattice.tilt_mean(out.masses, out.nodes, q))
    return FlowState.of(state.t + dt, out, state.leak + info["leaked"], reference=reference)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Snapshots of a flow with their diagnostics."""

    states: list
    reference: Measure | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def distances(self) -> np.ndarray:
        return np.array([np.nan if s.distance is None else s.distance for s in self.states])

    @property
    def final(self) -> FlowState:
        return self.states[-1]

    def diagnostics_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "mass", "mean", "variance", "leak", "distance_to_reference"])
        for s in self.states:
            wr.writerow([repr(s.t), repr(s.mass), repr(s.mean), repr(s.variance), repr(s.leak),
                         "" if s.distance is None else repr(s.distance)])
        return buf.getvalue()

    def write(self, directory, fmt: str = "csv") -> list[str]:
        """Write per-snapshot measures and ``diagnostics.csv``; return relative paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for k, s in enumerate(self.states):
            name = f"snapshot_{k:04d}.{fmt}"
            save(s.measure, directory / name)
            files.append(name)
        (directory / "diagnostics.csv").write_text(self.diagnostics_csv())
        files.append("diagnostics.csv")
        return files


def _prepare_initial(initial: Measure, scenario: MacroScenario) -> Measure:
    if scenario.representation == "atoms":
        if not isinstance(initial, DiscreteMeasure):
            raise TypeError("atomic flows need an atomic initial measure")
        return initial
    grid = scenario.config.grid
    if isinstance(initial, DiscreteMeasure):
        if grid is None:
            grid = default_grid(scenario.kernel, mean(initial) if initial.mass > 0 else 0.0)
        return grid_from_atoms(initial, grid.origin, grid.spacing, grid.n_cells)
    if grid is not None and initial.grid != grid:
        return grid_from_atoms(DiscreteMeasure(initial.nodes, initial.masses), grid.origin,
                               grid.spacing, grid.n_cells)
    return initial


def solve_to_time(initial: Measure, scenario: MacroScenario, T: float | None = None,
                  reference: Measure | None = None, snapshot_every: float | None = None) -> Trajectory:
    """Integrate a scenario to time ``T`` and keep snapshots.

    Atomic initial data for grid scenarios is deposited on the configured
    (or default) grid. Snapshots are taken every ``snapshot_every`` (default
    ``T / 200``), rounded to whole steps; the Wasserstein distance to
    ``reference`` is logged when given.
    """
    cfg = scenario.config
    T = cfg.horizon if T is None else T
    every = snapshot_every or cfg.snapshot_every or T / 200
    n_steps = int(round(T / cfg.dt))
    stride = max(1, int(round(every / cfg.dt)))
    mu = _prepare_initial(initial, scenario)
    state = FlowState.of(0.0, mu, reference=reference)
    states = [state]
    for k in range(1, n_steps + 1):
        if scenario.normalized:
            state = step_normalized(state, scenario.kernel, cfg.dt, leak_tol=cfg.leak_tol,
                                    compress_bins=cfg.compress_bins if scenario.representation == "atoms" else None)
        else:
            state = step_full(state, scenario)
        state = replace(state, t=k * cfg.dt)
        if k % stride == 0 or k == n_steps:
            if reference is not None:
                state = FlowState.of(state.t, state.measure, state.leak, state.clipped, reference)
            states.append(state)
    return Trajectory(states, reference)


__all__ = [
    "StabilityViolation", "ExtinctionRegime", "GridOverflow", "default_grid", "apply_P",
    "interpolative_atoms", "second_moment_of_P", "compress_atoms", "SolverConfig", "MacroScenario",
    "FlowState", "carrying_capacity", "logistic_mass", "rhs_full", "step_full", "step_normalized",
    "Trajectory", "solve_to_time",
]

"""Exact event-driven simulation of the individual-based population.

Each individual carries a scalar trait. Pairs mate at rate
``m(x_i, x_j; x)`` (ordered pairs) and produce one offspring drawn from the
kernel; individual ``i`` dies naturally at rate ``D(x_i)`` and from
competition at rate ``I(x_i) / N * sum_j U(x_i, x_j)`` (self included).
The empirical measure carries weight ``1/N`` per individual.

Category totals are maintained incrementally and checked against a fresh
recomputation every ``CHECK_EVERY`` events.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .demography import DemographyParams
from .kernels import OffspringKernel
from .mating import MatingModel, _damped_jacobi
from .measures import REAL_LINE, DiscreteMeasure, TraitDomain

BIRTH, NATURAL_DEATH, COMPETITION_DEATH = "Birth", "NaturalDeath", "CompetitionDeath"
CHECK_EVERY = 1000
BOOKKEEPING_RTOL = 1e-9
_BATCH = 4096


class ExtinctPopulation(RuntimeError):
    """No event can happen: the population is empty or all rates vanish."""


class DomainViolation(RuntimeError):
    """An offspring trait fell outside the trait domain."""


class BookkeepingDrift(RuntimeError):
    """Incrementally maintained rate totals drifted from a fresh recomputation."""


@dataclass(frozen=True)
class PopulationState:
    """A multiset of traits at a time."""

    traits: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        t = np.array(self.traits, dtype=float).ravel()
        t.setflags(write=False)
        object.__setattr__(self, "traits", t)
        if self.time < 0:
            raise ValueError("time must be nonnegative")

    @property
    def size(self) -> int:
        return self.traits.size

    def __len__(self):
        return self.traits.size

    def at(self, time: float) -> "PopulationState":
        return PopulationState(self.traits, time)


@dataclass(frozen=True)
class IbmScenario:
    """Everything needed to run one replica."""

    mating: MatingModel
    kernel: OffspringKernel
    demography: DemographyParams
    initial: PopulationState
    horizon: float
    scale_N: int = 1
    seed: int = 0
    domain: TraitDomain = REAL_LINE
    snapshot_every: float | None = None
    record_events: bool = True
    max_events: int | None = None

    def __post_init__(self):
        if int(self.scale_N) != self.scale_N or self.scale_N < 1:
            raise ValueError("scale_N must be a positive integer")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not np.all(self.domain.contains(self.initial.traits)):
            raise DomainViolation("initial traits outside the trait domain")

    @property
    def snapshot_interval(self) -> float:
        return self.snapshot_every or self.horizon / 200

    def with_seed(self, seed: int) -> "IbmScenario":
        from dataclasses import replace

        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: str
    trait_a: float
    trait_b: float = float("nan")
    offspring: float = float("nan")


@dataclass(frozen=True)
class RateSummary:
    birth: float
    natural_death: float
    competition: float

    @property
    def total(self) -> float:
        return self.birth + self.natural_death + self.competition


def empirical_measure(state: PopulationState | np.ndarray, scale_N: int = 1) -> DiscreteMeasure:
    """Empirical measure with one atom of weight ``1/N`` per individual."""
    traits = state.traits if isinstance(state, PopulationState) else np.asarray(state, dtype=float)
    return DiscreteMeasure(traits, np.full(traits.size, 1.0 / scale_N))


def _birth_total(mating: MatingModel, x: np.ndarray) -> float:
    n = x.size
    if n == 0:
        return 0.0
    v = mating.variant
    if v == "semirandom_selfing" or v == "general_cumulative":
        return float(mating.capability(x).sum())
    if v == "semirandom_noselfing":
        return float(mating.capability(x).sum()) if n >= 2 else 0.0
    if v == "assortative_averaged":
        return float(n)
    return float(n)


def event_rates(state: PopulationState, scenario: IbmScenario) -> RateSummary:
    """Fresh totals of the three event categories."""
    x = state.traits
    if x.size == 0:
        return RateSummary(0.0, 0.0, 0.0)
    dem = scenario.demography
    C = dem.competition_field(x, x, np.ones_like(x))
    return RateSummary(
        _birth_total(scenario.mating, x),
        float(dem.death(x).sum()),
        float(np.sum(dem.interaction(x) * C)) / scenario.scale_N,
    )


class _Simulator:
    """Mutable simulation state; one instance per replica."""

    def __init__(self, scenario: IbmScenario, state: PopulationState, rng: np.random.Generator):
        self.sc = scenario
        self.rng = rng
        self.t = float(state.time)
        self.n = state.size
        cap = max(16, 2 * self.n)
        self.x = np.empty(cap)
        self.x[: self.n] = state.traits
        dem = scenario.demography
        mating = scenario.mating
        self.const_p = mating.capability.is_constant or mating.is_assortative
        self.const_D = dem.constant_D
        self.const_I = dem.constant_I
        self.const_U = dem.constant_U
        self.p = np.empty(cap)
        self.D = np.empty(cap)
        self.I = np.empty(cap)
        self.C = np.empty(cap)
        self._fill(0, self.n)
        self.c = None
        self._uni = np.empty(0)
        self._ui = 0
        self._noise = np.empty(0)
        self._ni = 0
        self.resync()

    # -- per-individual data -------------------------------------------------

    def _fill(self, lo, hi):
        xs = self.x[lo:hi]
        dem = self.sc.demography
        self.p[lo:hi] = self.sc.mating.capability(xs) if not self.sc.mating.is_assortative else 1.0
        self.D[lo:hi] = dem.death(xs)
        self.I[lo:hi] = dem.interaction(xs)
        self.C[lo:hi] = dem.competition_field(xs, self.x[: self.n], np.ones(self.n)) if self.n else 0.0

    def _grow(self):
        cap = 2 * self.x.size
        for name in ("x", "p", "D", "I", "C"):
            arr = getattr(self, name)
            new = np.empty(cap)
            new[: arr.size] = arr
            setattr(self, name, new)

    def resync(self):
        n = self.n
        x = self.x[:n]
        if not self.const_U:
            self.C[:n] = self.sc.demography.competition_field(x, x, np.ones(n))
        self.sum_p = float(self.p[:n].sum())
        self.sum_D = float(self.D[:n].sum())
        self.sum_I = float(self.I[:n].sum())
        self.sum_IC = float(np.dot(self.I[:n], self.C[:n]))

    # -- random numbers ------------------------------------------------------

    def uniform(self) -> float:
        if self._ui >= self._uni.size:
            self._uni = self.rng.random(_BATCH)
            self._ui = 0
        u = self._uni[self._ui]
        self._ui += 1
        return float(u)

    def noise(self) -> float:
        if self._ni >= self._noise.size:
            self._noise = np.asarray(self.sc.kernel.draw_noise(self.rng, _BATCH), dtype=float)
            self._ni = 0
        z = self._noise[self._ni]
        self._ni += 1
        return float(z)

    def pick(self, weights: np.ndarray | None) -> int:
        """Index drawn proportionally to ``weights`` (uniform when None)."""
        u = self.uniform()
        if weights is None:
            return min(int(u * self.n), self.n - 1)
        cw = np.cumsum(weights)
        return min(int(np.searchsorted(cw, u * cw[-1], side="right")), self.n - 1)

    # -- totals --------------------------------------------------------------

    def totals(self) -> RateSummary:
        n = self.n
        if n == 0:
            return RateSummary(0.0, 0.0, 0.0)
        v = self.sc.mating.variant
        if v in ("semirandom_selfing", "general_cumulative"):
            b = self.sum_p
        elif v == "semirandom_noselfing":
            b = self.sum_p if n >= 2 else 0.0
        else:
            b = float(n) if (n >= 2 or self.sc.mating.selfing) else 0.0
        u = self.sc.demography.U
        comp = (self.sum_I * float(u) * n) if self.const_U else self.sum_IC
        return RateSummary(b, self.sum_D, comp / self.sc.scale_N)

    def check_bookkeeping(self) -> float:
        fresh = event_rates(PopulationState(self.x[: self.n].copy(), self.t), self.sc)
        mine = self.totals()
        err = 0.0
        for a, b in ((mine.birth, fresh.birth), (mine.natural_death, fresh.natural_death),
                     (mine.competition, fresh.competition)):
            err = max(err, abs(a - b) / max(abs(b), 1e-300) if b != 0 else abs(a))
        return err

    # -- participants --------------------------------------------------------

    def pick_parents(self) -> tuple[int, int]:
        n = self.n
        mating = self.sc.mating
        v = mating.variant
        x = self.x[:n]
        if v in ("semirandom_selfing", "semirandom_noselfing"):
            w = None if self.const_p else self.p[:n]
            i = self.pick(w)
            j = self.pick(w)
            if v == "semirandom_noselfing":
                while j == i:
                    j = self.pick(w)
            return i, j
        if v == "assortative_averaged":
            i = self.pick(None)
            row = mating.preference(x[i], x)
            if not mating.selfing:
                row[i] = 0.0
            return i, self.pick(row)
        c = self.constants()
        if v == "assortative_normalized":
            i = self.pick(None)
            row = (c[i] + c) * mating.preference(x[i], x)
        else:
            i = self.pick(None if self.const_p else self.p[:n])
            row = (c[i] + c) * mating.preference(x[i], x) * self.p[:n]
        return i, self.pick(row)

    def constants(self) -> np.ndarray:
        """Mating constants for the current population, warm-started."""
        n = self.n
        x = self.x[:n]
        mating = self.sc.mating
        pw = np.ones(n) if mating.variant == "assortative_normalized" else self.p[:n]
        G = mating.preference.matrix(x) * pw[None, :]
        rows = G.sum(axis=1)
        diag = rows + np.diag(G)
        c0 = self.c
        if c0 is not None and c0.size != n:
            c0 = None
        if n <= 400 and c0 is None:
            B = G.copy()
            B[np.diag_indices(n)] += rows
            c = np.linalg.solve(B, np.ones(n))
        else:
            c, _, ok = _damped_jacobi(G, diag, np.ones(n), c0)
            if not ok:
                B = G.copy()
                B[np.diag_indices(n)] += rows
                c = np.linalg.solve(B, np.ones(n))
        self.c = c
        return c

    def pick_victim(self, competition: bool) -> int:
        n = self.n
        if not competition:
            return self.pick(None if self.const_D else self.D[:n])
        if self.const_U:
            return self.pick(None if self.const_I else self.I[:n])
        return self.pick(self.I[:n] * self.C[:n])

    # -- population changes --------------------------------------------------

    def add(self, z: float):
        if self.n == self.x.size:
            self._grow()
        n = self.n
        self.x[n] = z
        dem = self.sc.demography
        if not self.const_U:
            u_old = dem.competition(self.x[:n], z) if n else np.empty(0)
            self.C[:n] += u_old
            self.sum_IC += float(np.dot(self.I[:n], u_old))
        self.n = n + 1
        self._fill(n, n + 1)
        if not self.const_U:
            self.sum_IC += float(self.I[n] * self.C[n])
        self.sum_p += self.p[n]
        self.sum_D += self.D[n]
        self.sum_I += self.I[n]
        if self.c is not None:
            self.c = np.append(self.c, self.c.mean())

    def remove(self, k: int):
        n = self.n - 1
        dem = self.sc.demography
        self.sum_p -= self.p[k]
        self.sum_D -= self.D[k]
        self.sum_I -= self.I[k]
        if not self.const_U:
            self.sum_IC -= float(self.I[k] * self.C[k])
            u = dem.competition(self.x[: n + 1], self.x[k])
            u[k] = 0.0
            self.C[: n + 1] -= u
            self.sum_IC -= float(np.dot(self.I[: n + 1], u))
        for arr in (self.x, self.p, self.D, self.I, self.C):
            arr[k] = arr[n]
        if self.c is not None:
            self.c[k] = self.c[n]
            self.c = self.c[:n]
        self.n = n

    def next_time(self) -> float:
        """Draw the waiting time; the event itself is applied by :meth:`fire`."""
        r = self.totals()
        if self.n == 0 or r.total <= 0:
            raise ExtinctPopulation("no event can occur")
        self._rates = r
        return self.t - np.log1p(-self.uniform()) / r.total

    def fire(self, t: float) -> EventRecord:
        self.t = t
        r = self._rates
        u = self.uniform() * r.total
        x = self.x
        if u < r.birth:
            i, j = self.pick_parents()
            a, b = x[i], x[j]
            z = float(self.sc.kernel.offspring_from_noise(a, b, self.noise()))
            if not self.sc.domain.contains(z):
                raise DomainViolation(f"offspring trait {z!r} outside the trait domain")
            self.add(z)
            return EventRecord(t, BIRTH, float(a), float(b), z)
        competition = u >= r.birth + r.natural_death
        k = self.pick_victim(competition)
        victim = float(x[k])
        self.remove(k)
        return EventRecord(t, COMPETITION_DEATH if competition else NATURAL_DEATH, victim)

    def step(self) -> EventRecord:
        return self.fire(self.next_time())

    def state(self) -> PopulationState:
        return PopulationState(self.x[: self.n].copy(), self.t)


def gillespie_step(state: PopulationState, scenario: IbmScenario, rng: np.random.Generator):
    """Advance one event from ``state``; returns ``(new_state, EventRecord)``.

    Raises:
        ExtinctPopulation: When the total event rate is zero.
    """
    sim = _Simulator(scenario, state, rng)
    rec = sim.step()
    return sim.state(), rec


@dataclass
class Trace:
    """Result of :func:`simulate`."""

    scale_N: int
    times: np.ndarray
    snapshots: list
    events: list = field(default_factory=list)
    n_events: int = 0
    extinction_time: float | None = None
    bookkeeping_error: float = 0.0
    truncated: bool = False

    @property
    def extinct(self) -> bool:
        return self.extinction_time is not None

    def empirical(self, k: int = -1) -> DiscreteMeasure:
        return empirical_measure(self.snapshots[k], self.scale_N)

    @property
    def scaled_mass(self) -> np.ndarray:
        return np.array([s.size / self.scale_N for s in self.snapshots])

    def events_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["time", "kind", "trait_a", "trait_b", "offspring"])
        for e in self.events:
            wr.writerow([repr(e.time), e.kind, repr(e.trait_a),
                         "" if np.isnan(e.trait_b) else repr(e.trait_b),
                         "" if np.isnan(e.offspring) else repr(e.offspring)])
        return buf.getvalue()


def simulate(scenario: IbmScenario) -> Trace:
    """Run one replica to the horizon or to extinction.

    Snapshots are the population at ``k * snapshot_interval``; after
    extinction the remaining snapshots are empty.
    """
    rng = np.random.default_rng(scenario.seed)
    sim = _Simulator(scenario, scenario.initial, rng)
    T = scenario.horizon
    n_snap = int(np.floor(T / scenario.snapshot_interval + 1e-9))
    times = np.array([k * scenario.snapshot_interval for k in range(n_snap + 1)])
    snapshots = []
    events = []
    next_snap = 0
    count = 0
    worst = 0.0
    extinct_at = None
    truncated = False
    if sim.n == 0:
        extinct_at = 0.0
    while extinct_at is None:
        if sim.totals().total <= 0:
            extinct_at = sim.t
            break
        t_next = sim.next_time()
        while next_snap <= n_snap and times[next_snap] < t_next:
            snapshots.append(sim.state().at(float(times[next_snap])))
            next_snap += 1
        if t_next > T:
            break
        rec = sim.fire(t_next)
        count += 1
        if scenario.record_events:
            events.append(rec)
        if count % CHECK_EVERY == 0:
            err = sim.check_bookkeeping()
            worst = max(worst, err)
            if err > BOOKKEEPING_RTOL:
                raise BookkeepingDrift(f"rate totals drifted by {err:.3g} (relative)")
            sim.resync()
        if sim.n == 0:
            extinct_at = rec.time
        if scenario.max_events is not None and count >= scenario.max_events:
            truncated = True
            break
    final = sim.state()
    while next_snap <= n_snap:
        if truncated and times[next_snap] > final.time:
            break
        snapshots.append(final.at(float(times[next_snap])))
        next_snap += 1
    return Trace(scenario.scale_N, times[: len(snapshots)], snapshots, events, count, extinct_at, worst,
                 truncated)


def simulate_replicas(scenario: IbmScenario, seeds, workers: int = 1) -> list[Trace]:
    """Independent replicas with the given seeds (optionally in processes)."""
    scenarios = [scenario.with_seed(s) for s in seeds]
    if workers <= 1:
        return [simulate(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(simulate, scenarios))


def initial_population(sampler, n0: int, seed: int = 0) -> PopulationState:
    """Draw ``n0`` initial traits with ``sampler(rng, size)``."""
    rng = np.random.default_rng(seed)
    return PopulationState(np.asarray(sampler(rng, n0), dtype=float) if n0 else np.empty(0))

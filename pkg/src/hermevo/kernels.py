"""Offspring-trait kernels K(x, y, dz) and their stationary profiles.

Three families are provided, all with offspring mean (x + y) / 2 and
symmetric in the parents:

* :class:`AdditiveKernel` -- ``(x + y)/2 + Z`` with a centred noise density.
* :class:`InterpolativeKernel` -- ``(x + y)/2 + Z |x - y| / 2`` with ``Z``
  on ``[-1, 1]``; the offspring lies between its parents.
* :class:`MultiplicativeKernel` -- ``(x + y) Z`` with ``Z`` on ``[0, 1]``
  and ``E Z = 1/2`` (traits on the half line).

Every sampler takes an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, special

from . import _lattice
from .measures import GridMeasure, GridSpec, deposit

MASS_TOL = 1e-8


class NoDensity(ValueError):
    """The kernel has no Lebesgue density at the requested parents."""


class GridOverflow(RuntimeError):
    """A computed measure does not fit on the supplied grid."""

    def __init__(self, message: str, leaked: float = float("nan")):
        super().__init__(message)
        self.leaked = leaked


class KernelConstraintError(ValueError):
    """A noise law violates a constraint required by its kernel family."""


# ---------------------------------------------------------------------------
# noise laws


class NoiseDensity:
    """A probability density on the line, with CDF, partial mean and sampler.

    ``partial_mean(z)`` is ``int_{-inf}^z t h(t) dt``; together with the CDF
    it lets lattice projections reproduce mass and mean exactly.
    """

    def __init__(self, pdf, cdf, partial_mean, second_moment, support, sampler, tag=None):
        self.pdf = pdf
        self.cdf = cdf
        self.partial_mean = partial_mean
        self.second_moment = float(second_moment)
        self.support = (float(support[0]), float(support[1]))
        self._sampler = sampler
        self.tag = tag

    @classmethod
    def gaussian(cls, sigma: float, loc: float = 0.0) -> "NoiseDensity":
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        s, m = float(sigma), float(loc)

        def pdf(z):
            u = (np.asarray(z, dtype=float) - m) / s
            return np.exp(-0.5 * u * u) / (s * np.sqrt(2 * np.pi))

        def cdf(z):
            return special.ndtr((np.asarray(z, dtype=float) - m) / s)

        def partial_mean(z):
            return m * cdf(z) - s * s * pdf(z)

        def sampler(rng, size):
            return m + s * rng.standard_normal(size)

        return cls(pdf, cdf, partial_mean, s * s + m * m, (-np.inf, np.inf), sampler,
                   tag=f"gaussian({s!r})")

    @classmethod
    def uniform(cls, a: float, b: float) -> "NoiseDensity":
        if not a < b:
            raise ValueError("uniform noise needs a < b")
        a, b = float(a), float(b)
        width = b - a

        def pdf(z):
            z = np.asarray(z, dtype=float)
            return np.where((z >= a) & (z <= b), 1.0 / width, 0.0)

        def cdf(z):
            return np.clip((np.asarray(z, dtype=float) - a) / width, 0.0, 1.0)

        def partial_mean(z):
            zc = np.clip(np.asarray(z, dtype=float), a, b)
            return (zc * zc - a * a) / (2 * width)

        def sampler(rng, size):
            return rng.uniform(a, b, size)

        return cls(pdf, cdf, partial_mean, (a * a + a * b + b * b) / 3, (a, b), sampler,
                   tag=f"uniform({a!r},{b!r})")

    @classmethod
    def tabulated(cls, x, density, normalize: bool = False) -> "NoiseDensity":
        """Piecewise-linear density through the points ``(x, density)``."""
        x = np.asarray(x, dtype=float)
        f = np.asarray(density, dtype=float)
        if x.ndim != 1 or x.shape != f.shape or x.size < 2:
            raise ValueError("tabulated density needs matching 1-D arrays of length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("tabulated abscissae must be strictly increasing")
        if np.any(f < 0):
            raise ValueError("tabulated density must be nonnegative")
        d = np.diff(x)
        mass = float(np.sum(0.5 * d * (f[:-1] + f[1:])))
        if normalize:
            f = f / mass
        elif abs(mass - 1.0) > MASS_TOL:
            raise KernelConstraintError(f"tabulated density integrates to {mass!r}, not 1")
        slope = np.diff(f) / d
        seg_mass = d * (f[:-1] + 0.5 * slope * d)
        seg_g = x[:-1] * seg_mass + f[:-1] * d**2 / 2 + slope * d**3 / 3
        seg_m2 = (x[:-1] ** 2 * seg_mass + 2 * x[:-1] * (f[:-1] * d**2 / 2 + slope * d**3 / 3)
                  + f[:-1] * d**3 / 3 + slope * d**4 / 4)
        C = np.concatenate(([0.0], np.cumsum(seg_mass)))
        G = np.concatenate(([0.0], np.cumsum(seg_g)))

        def _locate(z):
            z = np.asarray(z, dtype=float)
            i = np.clip(np.searchsorted(x, z, side="right") - 1, 0, x.size - 2)
            u = np.clip(z, x[0], x[-1]) - x[i]
            return z, i, u

        def pdf(z):
            z, i, u = _locate(z)
            val = f[i] + slope[i] * u
            return np.where((z >= x[0]) & (z <= x[-1]), val, 0.0)

        def cdf(z):
            _, i, u = _locate(z)
            return C[i] + f[i] * u + 0.5 * slope[i] * u * u

        def partial_mean(z):
            _, i, u = _locate(z)
            return G[i] + x[i] * (f[i] * u + 0.5 * slope[i] * u * u) + f[i] * u * u / 2 + slope[i] * u**3 / 3

        def sampler(rng, size):
            r = rng.random(size) * C[-1]
            i = np.clip(np.searchsorted(C, r, side="right") - 1, 0, x.size - 2)
            rem = r - C[i]
            disc = np.sqrt(np.maximum(f[i] ** 2 + 2 * slope[i] * rem, 0.0))
            denom = f[i] + disc
            u = np.where(denom > 0, 2 * rem / np.where(denom > 0, denom, 1.0), 0.0)
            return x[i] + np.minimum(u, d[i])

        return cls(pdf, cdf, partial_mean, float(np.sum(seg_m2)), (x[0], x[-1]), sampler,
                   tag="tabulated")

    @classmethod
    def from_csv(cls, path, normalize: bool = False) -> "NoiseDensity":
        """Load a tabulated density from a CSV file with header ``x,density``."""
        with Path(path).open() as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            if header != ["x", "density"]:
                raise ValueError(f"expected header 'x,density', got {header}")
            rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float)
        return cls.tabulated(rows[:, 0], rows[:, 1], normalize=normalize)

    @property
    def mass(self) -> float:
        lo, hi = self.support
        return float(self.cdf(hi) - self.cdf(lo))

    @property
    def mean(self) -> float:
        return float(self.partial_mean(self.support[1]))

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    def abs_mean(self) -> float:
        lo, hi = self.support
        return float(self.partial_mean(hi) - 2 * self.partial_mean(min(max(0.0, lo), hi)))

    def sample(self, rng: np.random.Generator, size=None):
        return self._sampler(rng, size)

    def lattice_pmf(self, spacing: float, offsets: np.ndarray, center: float = 0.0) -> np.ndarray:
        """Weights of the law on nodes ``center + offsets * spacing`` (hat projection).

        Mass is renormalized to one and the mean matched exactly to the law's
        mean after projection.
        """
        nodes = center + offsets * spacing
        pmf = _lattice.hat_projection(self.cdf, self.partial_mean, nodes, spacing)
        total = pmf.sum()
        if total <= 0:
            raise GridOverflow("noise law has no mass on the lattice")
        pmf = pmf / total
        return _lattice.tilt_mean(pmf, offsets, (self.mean - center) / spacing)

    def __repr__(self):
        return f"NoiseDensity({self.tag})"


@dataclass(frozen=True)
class InterpolationLaw:
    """Law of ``Z`` on ``[-1, 1]`` with ``E Z = 0`` used by the interpolative kernel.

    Always carries an atomic form (``values``, ``weights``). ``density`` is
    set when the law was built from a density; the kernel then has a
    density off the diagonal ``x == y``.
    """

    values: np.ndarray
    weights: np.ndarray
    density: NoiseDensity | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.shape != w.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("interpolation law needs matching nonempty 1-D arrays")
        if np.any(w < 0):
            raise ValueError("interpolation law weights must be nonnegative")
        w = w / w.sum()
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        if np.any(np.abs(v) > 1 + 1e-12):
            raise KernelConstraintError("interpolation law must be supported in [-1, 1]")
        if abs(np.dot(v, w)) > 1e-10:
            raise KernelConstraintError("interpolation law must have mean 0")
        if np.all(np.abs(v[w > 0]) >= 1 - 1e-15):
            raise KernelConstraintError("interpolation law must not satisfy |Z| == 1 a.s.")

    @classmethod
    def atoms(cls, values, weights) -> "InterpolationLaw":
        return cls(np.asarray(values, float), np.asarray(weights, float))

    @classmethod
    def three_point(cls, var: float) -> "InterpolationLaw":
        """``Z`` in ``{-1, 0, 1}`` with variance ``var`` (``0 <= var < 1``)."""
        if not 0 <= var < 1:
            raise ValueError("variance must lie in [0, 1)")
        return cls(np.array([-1.0, 0.0, 1.0]), np.array([var / 2, 1 - var, var / 2]))

    @classmethod
    def from_density(cls, noise: NoiseDensity, n_atoms: int = 201) -> "InterpolationLaw":
        lo, hi = noise.support
        if lo < -1 - 1e-12 or hi > 1 + 1e-12:
            raise KernelConstraintError("interpolation density must be supported in [-1, 1]")
        if abs(noise.mean) > 1e-10:
            raise KernelConstraintError("interpolation density must have mean 0")
        offsets = np.arange(n_atoms) - (n_atoms - 1) / 2
        spacing = 2.0 / (n_atoms - 1)
        pmf = noise.lattice_pmf(spacing, offsets)
        return cls(offsets * spacing, pmf, noise)

    @classmethod
    def uniform(cls, n_atoms: int = 201) -> "InterpolationLaw":
        return cls.from_density(NoiseDensity.uniform(-1.0, 1.0), n_atoms)

    @property
    def variance(self) -> float:
        return float(np.dot(self.values**2, self.weights))

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.density is not None:
            return self.density.cdf(t)
        cw = np.cumsum(self.weights)
        idx = np.searchsorted(self.values, t, side="right")
        order_ok = np.all(np.diff(self.values) > 0)
        if not order_ok:
            order = np.argsort(self.values)
            vals, cw = self.values[order], np.cumsum(self.weights[order])
            idx = np.searchsorted(vals, t, side="right")
        return np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)

    def sample(self, rng: np.random.Generator, size=None):
        if self.density is not None:
            return self.density.sample(rng, size)
        return rng.choice(self.values, size=size, p=self.weights)


# ---------------------------------------------------------------------------
# kernels


class OffspringKernel:
    """Common interface for the offspring-trait kernels."""

    family = "abstract"

    def draw_noise(self, rng: np.random.Generator, size=None):
        """Draw the family's noise variable ``Z`` (batched by the simulators)."""
        raise NotImplementedError

    def offspring_from_noise(self, x, y, z):
        raise NotImplementedError

    def sample(self, x, y, rng: np.random.Generator):
        x, y = np.asarray(x, float), np.asarray(y, float)
        return self.offspring_from_noise(x, y, self.draw_noise(rng, np.broadcast(x, y).shape or None))

    def density(self, x, y, z):
        raise NotImplementedError

    def cdf(self, x, y, z):
        raise NotImplementedError

    def offspring_mean(self, x: float, y: float) -> float:
        raise NotImplementedError

    def growth_constants(self) -> tuple[float, float, float]:
        """Constants ``(c1, c2, c3)`` with ``int |z| K(x,y,dz) <= c1 + c2|x| + c3|y|``."""
        raise NotImplementedError


class AdditiveKernel(OffspringKernel):
    """Offspring trait ``(x + y)/2 + Z``; runs on the whole real line."""

    family = "additive"

    def __init__(self, noise: NoiseDensity):
        if abs(noise.mass - 1) > MASS_TOL:
            raise KernelConstraintError("additive noise must integrate to 1")
        if abs(noise.mean) > MASS_TOL:
            raise KernelConstraintError(f"additive noise must have mean 0 (got {noise.mean:.3g})")
        self.noise = noise

    def draw_noise(self, rng, size=None):
        return self.noise.sample(rng, size)

    def offspring_from_noise(self, x, y, z):
        return 0.5 * (x + y) + z

    def density(self, x, y, z):
        return self.noise.pdf(np.asarray(z, float) - 0.5 * (np.asarray(x, float) + np.asarray(y, float)))

    def cdf(self, x, y, z):
        return self.noise.cdf(np.asarray(z, float) - 0.5 * (np.asarray(x, float) + np.asarray(y, float)))

    def offspring_mean(self, x, y):
        m = 0.5 * (x + y)
        lo, hi = self.noise.support
        val, _ = integrate.quad(lambda t: t * self.noise.pdf(t), lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        return m + val

    def growth_constants(self):
        return (self.noise.abs_mean(), 0.5, 0.5)

    def __repr__(self):
        return f"AdditiveKernel({self.noise.tag})"


class InterpolativeKernel(OffspringKernel):
    """Offspring trait ``(x + y)/2 + Z |x - y| / 2``, between the parents."""

    family = "interpolative"

    def __init__(self, law: InterpolationLaw):
        self.law = law

    def draw_noise(self, rng, size=None):
        return self.law.sample(rng, size)

    def offspring_from_noise(self, x, y, z):
        return 0.5 * (x + y) + z * 0.5 * abs(x - y)

    def density(self, x, y, z):
        x, y, z = (np.asarray(v, float) for v in (x, y, z))
        r = 0.5 * np.abs(x - y)
        if self.law.density is None or np.any(r == 0):
            raise NoDensity("interpolative kernel is atomic here (x == y or atomic Z)")
        return self.law.density.pdf((z - 0.5 * (x + y)) / r) / r

    def cdf(self, x, y, z):
        x, y, z = np.broadcast_arrays(*(np.asarray(v, float) for v in (x, y, z)))
        m = 0.5 * (x + y)
        r = 0.5 * np.abs(x - y)
        dirac = r == 0
        t = np.where(dirac, 0.0, (z - m) / np.where(dirac, 1.0, r))
        out = np.asarray(self.law.cdf(t), dtype=float)
        return np.where(dirac, (z >= m).astype(float), out)

    def offspring_mean(self, x, y):
        return 0.5 * (x + y) + float(np.dot(self.law.values, self.law.weights)) * 0.5 * abs(x - y)

    def growth_constants(self):
        return (0.0, 1.0, 1.0)

    def __repr__(self):
        return f"InterpolativeKernel(var={self.law.variance:.4g})"


class MultiplicativeKernel(OffspringKernel):
    """Offspring trait ``(x + y) Z`` with ``Z`` on ``[0, 1]`` and ``E Z = 1/2``."""

    family = "multiplicative"

    def __init__(self, noise: NoiseDensity):
        lo, hi = noise.support
        if lo < -1e-12 or hi > 1 + 1e-12:
            raise KernelConstraintError("multiplicative noise must be supported in [0, 1]")
        if abs(noise.mass - 1) > MASS_TOL:
            raise KernelConstraintError("multiplicative noise must integrate to 1")
        if abs(noise.mean - 0.5) > MASS_TOL:
            raise KernelConstraintError(
                f"multiplicative noise must satisfy int x h(x) dx = 1/2 (got {noise.mean:.6g})"
            )
        eps = 1e-3
        if noise.cdf(eps) <= 0:
            warnings.warn(
                "noise density vanishes near 0; contraction of the birth operator is not guaranteed",
                stacklevel=2,
            )
        self.noise = noise

    @classmethod
    def tjon_wu(cls) -> "MultiplicativeKernel":
        return cls(NoiseDensity.uniform(0.0, 1.0))

    @property
    def is_uniform(self) -> bool:
        return self.noise.tag == "uniform(0.0,1.0)"

    def draw_noise(self, rng, size=None):
        return self.noise.sample(rng, size)

    def offspring_from_noise(self, x, y, z):
        return (x + y) * z

    def density(self, x, y, z):
        s = np.asarray(x, float) + np.asarray(y, float)
        z = np.asarray(z, float)
        if np.any(s <= 0):
            raise NoDensity("multiplicative kernel is a Dirac at 0 when x + y == 0")
        inside = (z >= 0) & (z <= s)
        return np.where(inside, self.noise.pdf(z / s) / s, 0.0)

    def cdf(self, x, y, z):
        s, z = np.broadcast_arrays(np.asarray(x, float) + np.asarray(y, float), np.asarray(z, float))
        zero = s <= 0
        out = np.asarray(self.noise.cdf(z / np.where(zero, 1.0, s)), dtype=float)
        return np.where(zero, (z >= 0).astype(float), np.where(z < 0, 0.0, out))

    def offspring_mean(self, x, y):
        s = x + y
        if s == 0:
            return 0.0
        val, _ = integrate.quad(lambda z: z * self.noise.pdf(z / s) / s, 0.0, s,
                                epsabs=1e-13, epsrel=1e-12, limit=200)
        return val

    def growth_constants(self):
        return (0.0, 0.5, 0.5)

    def __repr__(self):
        return f"MultiplicativeKernel({self.noise.tag})"


def sample_offspring(k: OffspringKernel, x, y, rng: np.random.Generator):
    return k.sample(x, y, rng)


def kernel_density(k: OffspringKernel, x, y, z):
    return k.density(x, y, z)


def kernel_cdf(k: OffspringKernel, x, y, z):
    return k.cdf(x, y, z)


def check_mean_condition(k: OffspringKernel, sample_pairs) -> dict:
    """Compare the offspring mean of ``K(x, y, .)`` with ``(x + y)/2`` on each pair."""
    devs = []
    for x, y in sample_pairs:
        devs.append(abs(k.offspring_mean(float(x), float(y)) - 0.5 * (x + y)))
    devs = np.asarray(devs)
    return {
        "family": k.family,
        "n_pairs": int(devs.size),
        "max_deviation": float(devs.max()) if devs.size else 0.0,
        "deviations": devs.tolist(),
    }


# ---------------------------------------------------------------------------
# stationary profiles


def stationary_additive_profile(noise: NoiseDensity, q: float, depth: int, grid: GridSpec) -> GridMeasure:
    """Stationary density of the additive model as a truncated infinite convolution.

    The level-``n`` factor is the law of the average of ``2**n`` independent
    noise draws; it is built by repeated halving self-convolution, starting
    from the lattice projection of ``noise``. The product of the first
    ``depth + 1`` factors is shifted to mean ``q`` and deposited on ``grid``.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    h = grid.spacing
    J = grid.n_cells - 1
    offsets = np.arange(-J, J + 1, dtype=float)
    g = noise.lattice_pmf(h, offsets)
    g = _lattice.tilt_mean(g, offsets, 0.0)
    f = g
    lost = 0.0
    for _ in range(depth):
        g = _lattice.halve_sum(g)
        full = _lattice.convolve(f, g)
        f = full[J: 3 * J + 1]
        lost += full.sum() - f.sum()
    masses, leaked = deposit(q + offsets * h, f, grid.origin, h, grid.n_cells, strict=False)
    leaked += lost
    if leaked > 1e-10:
        raise GridOverflow(f"stationary profile leaks {leaked:.3g} of its mass off the grid", leaked)
    out = GridMeasure(grid.origin, h, masses / h)
    return out.normalized()


def additive_profile_report(profile: GridMeasure, noise: NoiseDensity) -> dict:
    """Variance of a computed additive profile against the limit ``2 Var(Z)``."""
    from .measures import variance

    var = variance(profile)
    target = 2.0 * noise.variance
    return {"variance": var, "target": target, "relative_error": abs(var - target) / target}


def tjonwu_stationary_reference(q: float, grid: GridSpec) -> GridMeasure:
    """Exponential equilibrium ``(1/q) exp(-x/q)`` of the classical Tjon-Wu kernel.

    Cell masses are integrated exactly over each cell intersected with the
    half line, renormalized, and tilted so the grid mean is exactly ``q``.
    """
    if not q > 0:
        raise ValueError("the Tjon-Wu reference needs q > 0")
    h = grid.spacing
    lo = np.maximum(grid.nodes - h / 2, 0.0)
    hi = np.maximum(grid.nodes + h / 2, 0.0)
    masses = np.exp(-lo / q) - np.exp(-hi / q)
    masses = masses / masses.sum()
    masses = _lattice.tilt_mean(masses, grid.nodes, q)
    return GridMeasure(grid.origin, h, masses / h)


def make_kernel(spec: dict) -> OffspringKernel:
    """Build a kernel from a ``{"family": ..., ...}`` mapping (config helper)."""
    family = spec["family"]
    if family == "additive":
        return AdditiveKernel(make_noise(spec["noise"]))
    if family == "multiplicative":
        return MultiplicativeKernel(make_noise(spec.get("noise", {"kind": "uniform", "a": 0.0, "b": 1.0})))
    if family == "interpolative":
        law = spec["law"]
        kind = law["kind"]
        if kind == "three_point":
            return InterpolativeKernel(InterpolationLaw.three_point(law["variance"]))
        if kind == "atoms":
            return InterpolativeKernel(InterpolationLaw.atoms(law["values"], law["weights"]))
        if kind == "uniform":
            return InterpolativeKernel(InterpolationLaw.uniform(law.get("n_atoms", 201)))
        if kind == "tabulated":
            return InterpolativeKernel(InterpolationLaw.from_density(make_noise(law)))
        raise ValueError(f"unknown interpolation law kind {kind!r}")
    raise ValueError(f"unknown kernel family {family!r}")


def make_noise(spec: dict) -> NoiseDensity:
    kind = spec["kind"]
    if kind == "gaussian":
        return NoiseDensity.gaussian(spec["sigma"])
    if kind == "uniform":
        return NoiseDensity.uniform(spec["a"], spec["b"])
    if kind == "tabulated":
        if "path" in spec:
            return NoiseDensity.from_csv(spec["path"], normalize=spec.get("normalize", False))
        return NoiseDensity.tabulated(spec["x"], spec["density"], normalize=spec.get("normalize", False))
    raise ValueError(f"unknown noise kind {kind!r}")

"""Finite positive measures on the real line and the 1-D Wasserstein distance.

Two representations are used throughout the package:

* :class:`DiscreteMeasure` -- weighted atoms (populations, atomic flows).
* :class:`GridMeasure` -- a density sampled on a uniform lattice of nodes
  ``origin + k * spacing``. Node ``k`` stands for the cell
  ``[x_k - spacing/2, x_k + spacing/2]`` on which the density is constant,
  so mass, mean and CDF are all computed from the same piecewise-constant
  density.

Measures are immutable and carry arbitrary nonnegative mass; probability
constraints are checked by the operations that need them.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

MERGE_RTOL = 1e-12
MASS_RTOL = 1e-9


class MassMismatch(ValueError):
    """Raised when a metric is requested between measures of unequal mass."""


class AtomOutsideGrid(ValueError):
    """Raised when an atom cannot be deposited on the requested grid."""


@dataclass(frozen=True)
class TraitDomain:
    """Closed interval ``[lower, upper]`` of admissible traits (bounds may be infinite)."""

    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty trait domain [{self.lower}, {self.upper}]")

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.lower) & (x <= self.upper)


REAL_LINE = TraitDomain()
HALF_LINE = TraitDomain(0.0, np.inf)


class DiscreteMeasure:
    """Sum of weighted Dirac masses, canonicalized (sorted, duplicates merged)."""

    __slots__ = ("positions", "weights")

    def __init__(self, positions=(), weights=None):
        x = np.atleast_1d(np.asarray(positions, dtype=float)).ravel()
        if weights is None:
            w = np.ones_like(x)
        else:
            w = np.atleast_1d(np.asarray(weights, dtype=float)).ravel()
        if x.shape != w.shape:
            raise ValueError("positions and weights differ in length")
        if not np.all(np.isfinite(x)):
            raise ValueError("atom positions must be finite")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("atom weights must be finite and nonnegative")
        x, w = _canonicalize(x, w)
        x.flags.writeable = False
        w.flags.writeable = False
        self.positions = x
        self.weights = w

    @classmethod
    def dirac(cls, x: float, weight: float = 1.0) -> "DiscreteMeasure":
        return cls([x], [weight])

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return self.positions.size

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.positions, self.weights * factor)

    def normalized(self) -> "DiscreteMeasure":
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalize the zero measure")
        return self.scaled(1.0 / m)

    def support(self):
        return self.positions, self.weights

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return np.array_equal(self.positions, other.positions) and np.array_equal(
            self.weights, other.weights
        )

    def __repr__(self):
        return f"DiscreteMeasure(n_atoms={len(self)}, mass={self.mass:.6g})"


def _canonicalize(x: np.ndarray, w: np.ndarray):
    keep = w > 0
    x, w = x[keep], w[keep]
    if x.size == 0:
        return x.copy(), w.copy()
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    tol = MERGE_RTOL * np.maximum(1.0, np.abs(x[:-1]))
    new_group = np.concatenate(([True], np.diff(x) > tol))
    if new_group.all():
        return x.copy(), w.copy()
    group = np.cumsum(new_group) - 1
    wsum = np.bincount(group, weights=w)
    # merged atom keeps the first position of its run
    xs = x[new_group]
    return xs, wsum


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice ``origin + k * spacing`` for ``k < n_cells``."""

    origin: float
    spacing: float
    n_cells: int

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("grid spacing must be positive")
        if self.n_cells < 2:
            raise ValueError("a grid needs at least two cells")

    @classmethod
    def spanning(cls, lower: float, upper: float, n_cells: int) -> "GridSpec":
        """Lattice whose first and last nodes are ``lower`` and ``upper``."""
        return cls(float(lower), (upper - lower) / (n_cells - 1), int(n_cells))

    @property
    def nodes(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n_cells)

    @property
    def upper(self) -> float:
        return self.origin + self.spacing * (self.n_cells - 1)

    def empty(self) -> "GridMeasure":
        return GridMeasure(self.origin, self.spacing, np.zeros(self.n_cells))


class GridMeasure:
    """Density values on the uniform lattice ``origin + k * spacing``."""

    __slots__ = ("origin", "spacing", "values")

    def __init__(self, origin: float, spacing: float, values):
        if not spacing > 0:
            raise ValueError("grid spacing must be positive")
        v = np.array(values, dtype=float).ravel()
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("grid density must be finite and nonnegative")
        v.flags.writeable = False
        self.origin = float(origin)
        self.spacing = float(spacing)
        self.values = v

    @classmethod
    def from_function(cls, f, lower: float, upper: float, n_cells: int) -> "GridMeasure":
        """Sample ``f`` at the nodes of an ``n_cells`` lattice spanning ``[lower, upper]``."""
        nodes = np.linspace(lower, upper, n_cells)
        return cls(lower, nodes[1] - nodes[0], np.asarray(f(nodes), dtype=float))

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.origin, self.spacing, self.values.size)

    @property
    def nodes(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.values.size)

    @property
    def masses(self) -> np.ndarray:
        return self.spacing * self.values

    @property
    def mass(self) -> float:
        return float(self.spacing * np.sum(self.values))

    def support(self):
        return self.nodes, self.masses

    def with_values(self, values) -> "GridMeasure":
        return GridMeasure(self.origin, self.spacing, values)

    def with_masses(self, masses) -> "GridMeasure":
        return GridMeasure(self.origin, self.spacing, np.asarray(masses) / self.spacing)

    def scaled(self, factor: float) -> "GridMeasure":
        return self.with_values(self.values * factor)

    def normalized(self) -> "GridMeasure":
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalize the zero measure")
        return self.scaled(1.0 / m)

    def same_grid(self, other: "GridMeasure") -> bool:
        return (
            self.values.size == other.values.size
            and np.isclose(self.origin, other.origin, rtol=0, atol=1e-12 * self.spacing)
            and np.isclose(self.spacing, other.spacing, rtol=1e-12, atol=0)
        )

    def __repr__(self):
        return (
            f"GridMeasure(origin={self.origin:.6g}, spacing={self.spacing:.6g}, "
            f"n_cells={self.n_cells}, mass={self.mass:.6g})"
        )


Measure = Union[DiscreteMeasure, GridMeasure]


def total_mass(m: Measure) -> float:
    return m.mass


def moment(m: Measure, order: int, absolute: bool = False, center: float = 0.0) -> float:
    """Raw moment ``sum w_i (x_i - center)^k`` (midpoint rule for grids)."""
    x, w = m.support()
    d = x - center
    if absolute:
        d = np.abs(d)
    return float(np.sum(w * d**order))


def mean(m: Measure) -> float:
    return moment(m, 1) / m.mass


def variance(m: Measure) -> float:
    mu = mean(m)
    return moment(m, 2, center=mu) / m.mass


@dataclass(frozen=True)
class SignedCdf:
    """Piecewise-linear CDF of ``mu - nu`` on merged breakpoints.

    On ``(breaks[k], breaks[k+1])`` the function is linear from ``right[k]``
    (right limit at ``breaks[k]``) to ``left[k+1]`` (left limit at
    ``breaks[k+1]``). Atoms produce jumps, so ``left`` and ``right`` differ
    exactly at atom positions.
    """

    breaks: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        b = self.breaks
        if b.size == 0:
            return np.zeros_like(z)
        k = np.searchsorted(b, z, side="right") - 1
        out = np.zeros_like(z)
        inside = (k >= 0) & (k < b.size - 1)
        kk = k[inside]
        t = (z[inside] - b[kk]) / (b[kk + 1] - b[kk])
        out[inside] = self.right[kk] + t * (self.left[kk + 1] - self.right[kk])
        out[k >= b.size - 1] = self.right[-1]
        return out

    def abs_integral(self) -> float:
        """Exact integral of ``|Phi|`` (linear pieces split at sign changes)."""
        if self.breaks.size < 2:
            return 0.0
        dx = np.diff(self.breaks)
        a = self.right[:-1]
        b = self.left[1:]
        same = a * b >= 0
        out = np.where(same, 0.5 * (np.abs(a) + np.abs(b)) * dx, 0.0)
        cross = ~same
        if np.any(cross):
            ac, bc = a[cross], b[cross]
            out[cross] = 0.5 * dx[cross] * (ac**2 + bc**2) / (np.abs(ac) + np.abs(bc))
        return float(np.sum(out))


def _cdf_pieces(m: Measure):
    """Breakpoints with left/right limits of the CDF of ``m``."""
    if isinstance(m, DiscreteMeasure):
        x, w = m.positions, m.weights
        c = np.cumsum(w)
        left = c - w
        return x, left, c
    h = m.spacing
    edges = m.origin - 0.5 * h + h * np.arange(m.n_cells + 1)
    c = np.concatenate(([0.0], np.cumsum(m.masses)))
    return edges, c, c


def _eval_cdf(breaks, left, right, z, side):
    """Evaluate a piecewise CDF at ``z``, taking the ``side`` limit at breakpoints."""
    out = np.zeros_like(z)
    if breaks.size == 0:
        return out
    k = np.searchsorted(breaks, z, side="right") - 1
    valid = k >= 0
    kv = np.where(valid, k, 0)
    exact = valid & (breaks[kv] == z)
    out[exact] = (right if side == "right" else left)[k[exact]]
    last = valid & ~exact & (k >= breaks.size - 1)
    out[last] = right[-1]
    mid = valid & ~exact & ~last
    kk = k[mid]
    t = (z[mid] - breaks[kk]) / (breaks[kk + 1] - breaks[kk])
    out[mid] = right[kk] + t * (left[kk + 1] - right[kk])
    return out


def cdf_of_difference(mu: Measure, nu: Measure) -> SignedCdf:
    """CDF ``Phi(z) = (mu - nu)((-inf, z])`` as a :class:`SignedCdf`."""
    bm, lm, rm = _cdf_pieces(mu)
    bn, ln, rn = _cdf_pieces(nu)
    breaks = np.union1d(bm, bn)
    left = _eval_cdf(bm, lm, rm, breaks, "left") - _eval_cdf(bn, ln, rn, breaks, "left")
    right = _eval_cdf(bm, lm, rm, breaks, "right") - _eval_cdf(bn, ln, rn, breaks, "right")
    return SignedCdf(breaks, left, right)


def _check_masses(mu: Measure, nu: Measure):
    a, b = mu.mass, nu.mass
    if abs(a - b) > MASS_RTOL * max(a, b, 1e-300):
        raise MassMismatch(f"measures have unequal mass ({a!r} vs {b!r})")


def wasserstein_1d(mu: Measure, nu: Measure) -> float:
    """W1 distance between equal-mass measures as the L1 norm of their CDF difference.

    Integration is exact for the piecewise-linear CDFs used here (steps for
    atoms, ramps across grid cells); relative to the underlying smooth
    density a grid contributes an O(spacing^2) error.
    """
    _check_masses(mu, nu)
    return cdf_of_difference(mu, nu).abs_integral()


def wasserstein_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """W1 by the monotone (sorted-quantile) coupling of two atomic measures.

    Independent of :func:`wasserstein_1d`; intended for tests only.
    """
    _check_masses(mu, nu)
    cw_mu = np.cumsum(mu.weights)
    cw_nu = np.cumsum(nu.weights)
    levels = np.union1d(cw_mu, cw_nu)
    levels = levels[levels > 0]
    lo = np.concatenate(([0.0], levels[:-1]))
    mid = 0.5 * (lo + levels)
    qa = mu.positions[np.minimum(np.searchsorted(cw_mu, mid), len(mu) - 1)]
    qb = nu.positions[np.minimum(np.searchsorted(cw_nu, mid), len(nu) - 1)]
    return float(np.sum((levels - lo) * np.abs(qa - qb)))


def l1_distance(u: GridMeasure, v: GridMeasure) -> float:
    """L1 distance between two densities sampled on the same grid."""
    if not u.same_grid(v):
        raise ValueError("L1 distance requires identical grids")
    return float(u.spacing * np.sum(np.abs(u.values - v.values)))


def deposit(positions, weights, origin: float, spacing: float, n_cells: int, strict: bool = True):
    """Linear (cloud-in-cell) deposition of atoms onto lattice nodes.

    Each weight is split between the two neighbouring nodes in inverse
    proportion to distance, which preserves mass and first moment exactly.
    Returns node masses and, when ``strict`` is False, the mass that fell
    outside the lattice.
    """
    x = np.asarray(positions, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    s = (x - origin) / spacing
    top = n_cells - 1
    # snap roundoff onto nodes (atoms given at cell centres land on one node)
    r = np.rint(s)
    s = np.where(np.abs(s - r) < 1e-10, r, s)
    outside = (s < 0) | (s > top)
    leaked = float(np.sum(w[outside]))
    if strict and np.any(outside):
        bad = x[outside][0]
        raise AtomOutsideGrid(f"atom at {bad!r} lies outside the grid span")
    s, w = s[~outside], w[~outside]
    k = np.minimum(np.floor(s).astype(np.int64), max(top - 1, 0))
    frac = s - k
    out = np.bincount(k, weights=w * (1.0 - frac), minlength=n_cells)
    if top > 0:
        out += np.bincount(k + 1, weights=w * frac, minlength=n_cells + 1)[:n_cells]
    if strict:
        return out
    return out, leaked


def grid_from_atoms(m: DiscreteMeasure, origin: float, spacing: float, n_cells: int) -> GridMeasure:
    """Deposit an atomic measure on a grid, preserving mass and first moment."""
    masses = deposit(m.positions, m.weights, origin, spacing, n_cells)
    return GridMeasure(origin, spacing, masses / spacing)


def atoms_of(m: Measure) -> DiscreteMeasure:
    """View a grid measure as atoms at its nodes (identity for atomic input)."""
    if isinstance(m, DiscreteMeasure):
        return m
    return DiscreteMeasure(m.nodes, m.masses)


def tilt_to_mean(m: GridMeasure, q: float) -> GridMeasure:
    """Reweight a grid density by ``1 + lam (x - mean)`` so its mean is exactly ``q``.

    Mass is unchanged. Intended for small corrections; raises if the tilt
    would make the density negative.
    """
    x, w = m.support()
    mass = w.sum()
    mu = np.dot(x, w) / mass
    var = np.dot((x - mu) ** 2, w) / mass
    if var == 0:
        raise ValueError("cannot tilt a single-node measure")
    lam = (q - mu) / var
    factor = 1.0 + lam * (x - mu)
    if np.any(factor[w > 0] < 0):
        raise ValueError("mean correction too large for a positive tilt")
    out = m.with_values(m.values * factor)
    return out


# ---------------------------------------------------------------------------
# serialization


def to_json(m: Measure) -> str:
    if isinstance(m, DiscreteMeasure):
        obj = {
            "kind": "atoms",
            "atoms": [[float(x), float(w)] for x, w in zip(m.positions, m.weights)],
        }
    else:
        obj = {
            "kind": "grid",
            "origin": m.origin,
            "spacing": m.spacing,
            "values": [float(v) for v in m.values],
        }
    return json.dumps(obj)


def from_json(text: str) -> Measure:
    obj = json.loads(text)
    kind = obj.get("kind")
    if kind == "atoms":
        atoms = np.asarray(obj["atoms"], dtype=float).reshape(-1, 2)
        return DiscreteMeasure(atoms[:, 0], atoms[:, 1])
    if kind == "grid":
        return GridMeasure(obj["origin"], obj["spacing"], obj["values"])
    raise ValueError(f"unknown measure kind {kind!r}")


def to_csv(m: Measure) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if isinstance(m, DiscreteMeasure):
        writer.writerow(["position", "weight"])
        rows = zip(m.positions, m.weights)
    else:
        writer.writerow(["cell_center", "density"])
        rows = zip(m.nodes, m.values)
    for a, b in rows:
        writer.writerow([repr(float(a)), repr(float(b))])
    return buf.getvalue()


def from_csv(text: str) -> Measure:
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader)]
    rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float).reshape(-1, 2)
    if header == ["position", "weight"]:
        return DiscreteMeasure(rows[:, 0], rows[:, 1])
    if header == ["cell_center", "density"]:
        if rows.shape[0] < 2:
            raise ValueError("grid CSV needs at least two cells")
        steps = np.diff(rows[:, 0])
        spacing = float(np.mean(steps))
        if not np.allclose(steps, spacing, rtol=1e-9, atol=0):
            raise ValueError("grid CSV cell centers are not uniformly spaced")
        # recompute from the first node so round-trips are exact
        return GridMeasure(rows[0, 0], (rows[-1, 0] - rows[0, 0]) / (rows.shape[0] - 1), rows[:, 1])
    raise ValueError(f"unrecognized measure CSV header {header}")


def save(m: Measure, path) -> None:
    path = Path(path)
    text = to_json(m) if path.suffix == ".json" else to_csv(m)
    path.write_text(text)


def load(path) -> Measure:
    path = Path(path)
    text = path.read_text()
    return from_json(text) if path.suffix == ".json" else from_csv(text)

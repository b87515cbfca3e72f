"""Mating rates for finite populations and for measures.

Finite populations are given as trait arrays (or anything with a
``traits`` attribute); indices are 0-based. Measure-level rates take a
:class:`~hermevo.measures.DiscreteMeasure` or
:class:`~hermevo.measures.GridMeasure` (grid nodes act as atoms carrying
the cell masses).

Variants:

``semirandom_selfing``
    ``p(x_i) p(x_j) / sum_l p(x_l)``; rows sum to ``p(x_i)``.
``semirandom_noselfing``
    two-denominator symmetrization with zero self-rate.
``assortative_averaged``
    ``a_ij / (2 sum_l a_il) + a_ij / (2 sum_l a_jl)``.
``assortative_normalized``
    ``(c_i + c_j) a_ij`` with constants making every row sum to 1.
``general_cumulative``
    ``(c_i + c_j) a_ij p_i p_j`` with rows summing to ``p(x_i)``.
"""

from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .measures import DiscreteMeasure, GridMeasure

VARIANTS = (
    "semirandom_selfing",
    "semirandom_noselfing",
    "assortative_averaged",
    "assortative_normalized",
    "general_cumulative",
)

DIRECT_SOLVE_MAX = 2000
JACOBI_TOL = 1e-12
JACOBI_MAX_ITER = 10_000
RESIDUAL_TOL = 1e-10


class StaleConstants(ValueError):
    """Mating constants were solved for a different population or measure."""


class EmptyPopulation(ValueError):
    pass


@dataclass(frozen=True)
class CapabilityFunction:
    """Mating capability ``p`` with declared bounds ``lower <= p <= upper``."""

    func: Callable
    lower: float
    upper: float
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.lower <= self.upper:
            raise ValueError("capability bounds must satisfy 0 < lower <= upper")

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    @property
    def is_constant(self) -> bool:
        return self.lower == self.upper

    @classmethod
    def constant(cls, value: float = 1.0) -> "CapabilityFunction":
        v = float(value)
        return cls(lambda x: np.full(np.shape(x), v), v, v, f"constant({v!r})")

    @classmethod
    def from_function(cls, func, lower: float, upper: float, name: str = "custom"):
        return cls(func, float(lower), float(upper), name)

    def check_bounds(self, x) -> bool:
        v = self(x)
        return bool(np.all((v >= self.lower * (1 - 1e-12)) & (v <= self.upper * (1 + 1e-12))))


@dataclass(frozen=True)
class PreferenceFunction:
    """Symmetric preference ``a(x, y) = phi(|x - y|)`` with bounds ``lower <= a <= upper``."""

    phi: Callable
    lower: float
    upper: float
    name: str = "custom"

    def __post_init__(self):
        if not 0 <= self.lower <= self.upper or self.upper <= 0:
            raise ValueError("preference bounds must satisfy 0 <= lower <= upper, upper > 0")

    def __call__(self, x, y):
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        return np.asarray(self.phi(d), dtype=float)

    def matrix(self, x, y=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = x if y is None else np.asarray(y, dtype=float)
        return self(x[:, None], y[None, :])

    @property
    def is_constant(self) -> bool:
        return self.lower == self.upper

    @classmethod
    def constant(cls, value: float = 1.0) -> "PreferenceFunction":
        v = float(value)
        return cls(lambda d: np.full(np.shape(d), v), v, v, f"constant({v!r})")

    @classmethod
    def gaussian(cls, width: float, floor: float = 0.0, scale: float = 1.0) -> "PreferenceFunction":
        """``floor + (scale - floor) exp(-r^2 / (2 width^2))``."""
        if not width > 0:
            raise ValueError("preference width must be positive")
        s, f0, top = float(width), float(floor), float(scale)
        return cls(lambda d: f0 + (top - f0) * np.exp(-0.5 * (d / s) ** 2), f0, top,
                   f"gaussian({s!r}, floor={f0!r})")

    @classmethod
    def tabulated(cls, r, phi) -> "PreferenceFunction":
        r = np.asarray(r, dtype=float)
        v = np.asarray(phi, dtype=float)
        if r[0] != 0 or np.any(np.diff(r) <= 0):
            raise ValueError("tabulated preference needs increasing distances starting at 0")
        if np.any(v < 0):
            raise ValueError("tabulated preference must be nonnegative")
        return cls(lambda d: np.interp(d, r, v), float(v.min()), float(v.max()), "tabulated")

    @classmethod
    def from_csv(cls, path) -> "PreferenceFunction":
        with Path(path).open() as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            if header != ["distance", "preference"]:
                raise ValueError(f"expected header 'distance,preference', got {header}")
            rows = np.array([[float(v) for v in row] for row in reader if row])
        return cls.tabulated(rows[:, 0], rows[:, 1])


def _traits(pop) -> np.ndarray:
    return np.asarray(getattr(pop, "traits", pop), dtype=float)


# ---------------------------------------------------------------------------
# finite populations


def semirandom_matrix(traits, p: CapabilityFunction, selfing: bool = True) -> np.ndarray:
    x = _traits(traits)
    n = x.size
    if n == 0:
        raise EmptyPopulation("mating rates of an empty population")
    pv = p(x)
    total = pv.sum()
    if selfing:
        return np.outer(pv, pv) / total
    if n == 1:
        return np.zeros((1, 1))
    inv = 1.0 / (total - pv)
    m = 0.5 * np.outer(pv, pv) * (inv[:, None] + inv[None, :])
    np.fill_diagonal(m, 0.0)
    return m


def rate_semirandom_selfing(pop, p: CapabilityFunction, i: int, j: int) -> float:
    x = _traits(pop)
    if x.size == 0:
        raise EmptyPopulation("mating rates of an empty population")
    pv = p(x)
    return float(pv[i] * pv[j] / pv.sum())


def rate_semirandom_noselfing(pop, p: CapabilityFunction, i: int, j: int) -> float:
    x = _traits(pop)
    if i == j or x.size < 2:
        return 0.0
    pv = p(x)
    total = pv.sum()
    return float(0.5 * pv[i] * pv[j] * (1.0 / (total - pv[i]) + 1.0 / (total - pv[j])))


def assortative_averaged_matrix(traits, a: PreferenceFunction, selfing: bool = True) -> np.ndarray:
    x = _traits(traits)
    n = x.size
    if n == 0 or (n == 1 and not selfing):
        raise EmptyPopulation("assortative rates need a partner")
    A = a.matrix(x)
    if not selfing:
        np.fill_diagonal(A, 0.0)
    rows = A.sum(axis=1)
    m = 0.5 * A / rows[:, None] + 0.5 * A / rows[None, :]
    return m


def rate_assortative_averaged(pop, a: PreferenceFunction, i: int, j: int, selfing: bool = True) -> float:
    x = _traits(pop)
    n = x.size
    if n == 0 or (n == 1 and not selfing):
        raise EmptyPopulation("assortative rates need a partner")
    if not selfing and i == j:
        return 0.0
    ri = a(x[i], x)
    rj = a(x[j], x)
    si, sj = ri.sum(), rj.sum()
    if not selfing:
        si -= ri[i]
        sj -= rj[j]
    aij = float(a(x[i], x[j]))
    return float(0.5 * aij / si + 0.5 * aij / sj)


@dataclass
class MatingConstants:
    """Solved constants ``c`` at the nodes of a population or measure.

    ``key`` fingerprints the nodes and weights the system was solved
    against; rate functions refuse constants whose key does not match.
    """

    c: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    preference: PreferenceFunction
    capability: CapabilityFunction | None
    key: str
    residual: float
    method: str = "direct"
    iterations: int = 0

    def __call__(self, x) -> np.ndarray:
        """Nystrom extension of ``c`` to arbitrary traits (exact at the nodes)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pw = _cap(self.capability, self.nodes) * self.weights
        A = self.preference.matrix(x, self.nodes) * pw[None, :]
        return (1.0 - A @ self.c) / A.sum(axis=1)

    def check(self, nodes, weights) -> None:
        if _fingerprint(nodes, weights) != self.key:
            raise StaleConstants("mating constants were solved for a different state")


def _cap(p, x):
    return np.ones_like(x) if p is None else p(x)


def _fingerprint(nodes, weights) -> str:
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(nodes, dtype=float).tobytes())
    h.update(np.ascontiguousarray(weights, dtype=float).tobytes())
    return h.hexdigest()


def _solve_constants(nodes, weights, a, p, c0=None, method=None) -> MatingConstants:
    """Solve ``c_i sum_l G_il + sum_j G_ij c_j = 1`` with ``G_ij = a_ij p_j w_j``.

    The matrix is strictly diagonally dominant by rows. Small systems use
    direct elimination; large ones a damped Jacobi iteration seeded with
    ``c0``.
    """
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = nodes.size
    if n == 0 or weights.sum() <= 0:
        raise EmptyPopulation("cannot solve mating constants for an empty state")
    G = a.matrix(nodes) * (_cap(p, nodes) * weights)[None, :]
    rows = G.sum(axis=1)
    diag = rows + np.diag(G)
    rhs = np.ones(n)
    if method is None:
        method = "direct" if n <= DIRECT_SOLVE_MAX else "jacobi"
    iters = 0
    if method == "jacobi":
        c, iters, ok = _damped_jacobi(G, diag, rhs, c0)
        if not ok:
            warnings.warn("Jacobi iteration did not converge; falling back to direct solve", stacklevel=3)
            method = "direct"
    if method == "direct":
        B = G.copy()
        B[np.diag_indices(n)] += rows
        c = np.linalg.solve(B, rhs)
    residual = float(np.max(np.abs(c * rows + G @ c - 1.0)))
    if not np.all(c > 0):
        raise ArithmeticError("mating constants solve produced a nonpositive entry")
    return MatingConstants(c, nodes.copy(), weights.copy(), a, p, _fingerprint(nodes, weights),
                           residual, method, iters)


def _damped_jacobi(G, diag, rhs, c0=None, omega=2.0 / 3.0):
    offdiag_diag = np.diag(G)
    c = rhs / diag if c0 is None or len(c0) != rhs.size else np.asarray(c0, dtype=float).copy()
    for it in range(1, JACOBI_MAX_ITER + 1):
        off = G @ c - offdiag_diag * c
        new = (rhs - off) / diag
        step = omega * (new - c)
        c = c + step
        if np.max(np.abs(step)) <= JACOBI_TOL * np.max(np.abs(c)):
            return c, it, True
    return c, JACOBI_MAX_ITER, False


def solve_mating_constants_discrete(pop, a: PreferenceFunction, c0=None, method=None) -> MatingConstants:
    """Constants ``c_1..c_n`` for the normalized assortative rate of a population."""
    x = _traits(pop)
    return _solve_constants(x, np.ones_like(x), a, None, c0=c0, method=method)


def normalized_matrix(traits, a: PreferenceFunction, constants: MatingConstants) -> np.ndarray:
    x = _traits(traits)
    constants.check(x, np.ones_like(x))
    c = constants.c
    return (c[:, None] + c[None, :]) * a.matrix(x)


def rate_assortative_normalized(pop, a: PreferenceFunction, constants: MatingConstants, i: int, j: int) -> float:
    x = _traits(pop)
    constants.check(x, np.ones_like(x))
    return float((constants.c[i] + constants.c[j]) * a(x[i], x[j]))


# ---------------------------------------------------------------------------
# measures


def _support(mu):
    if isinstance(mu, (DiscreteMeasure, GridMeasure)):
        return mu.support()
    raise TypeError(f"expected a measure, got {type(mu).__name__}")


def rate_measure_semirandom(p: CapabilityFunction, mu, x, y):
    nodes, w = _support(mu)
    denom = float(np.dot(p(nodes), w))
    if denom <= 0:
        raise EmptyPopulation("mating rate of the zero measure")
    return p(x) * p(y) / denom


def rate_measure_assortative(a: PreferenceFunction, mu, x, y):
    nodes, w = _support(mu)
    if w.sum() <= 0:
        raise EmptyPopulation("mating rate of the zero measure")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Ax = np.asarray(a(np.atleast_1d(x).ravel()[:, None], nodes[None, :]) @ w).reshape(np.shape(x))
    Ay = np.asarray(a(np.atleast_1d(y).ravel()[:, None], nodes[None, :]) @ w).reshape(np.shape(y))
    axy = a(x, y)
    return 0.5 * axy / Ax + 0.5 * axy / Ay


def solve_fredholm_constants(a: PreferenceFunction, p: CapabilityFunction | None, mu, c0=None,
                             method=None) -> MatingConstants:
    """Constants ``c(x; mu)`` on the support nodes of ``mu``.

    Discretizes ``c(x) int a(x,y) p(y) mu(dy) + int c(y) a(x,y) p(y) mu(dy) = 1``
    with the atoms (or grid nodes with cell masses) of ``mu`` as nodes, so the
    resulting rate ``(c(x)+c(y)) a(x,y) p(x) p(y)`` integrates against ``mu``
    to ``p(x)``. ``p=None`` means ``p == 1``.
    """
    nodes, w = _support(mu)
    keep = w > 0
    return _solve_constants(nodes[keep], w[keep], a, p, c0=c0, method=method)


def rate_measure_general(a: PreferenceFunction, p: CapabilityFunction | None,
                         constants: MatingConstants, x, y, mu=None):
    if mu is not None:
        nodes, w = _support(mu)
        keep = w > 0
        constants.check(nodes[keep], w[keep])
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cx = constants(np.atleast_1d(x).ravel()).reshape(np.shape(x))
    cy = constants(np.atleast_1d(y).ravel()).reshape(np.shape(y))
    return (cx + cy) * a(x, y) * _cap(p, x) * _cap(p, y)


# ---------------------------------------------------------------------------
# model wrapper used by the simulators


@dataclass(frozen=True)
class MatingModel:
    """A mating variant with its capability and/or preference function."""

    variant: str
    capability: CapabilityFunction = field(default_factory=CapabilityFunction.constant)
    preference: PreferenceFunction = field(default_factory=PreferenceFunction.constant)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown mating variant {self.variant!r}; expected one of {VARIANTS}")

    @property
    def selfing(self) -> bool:
        return self.variant != "semirandom_noselfing"

    @property
    def is_assortative(self) -> bool:
        return self.variant in ("assortative_averaged", "assortative_normalized")

    def growth_upper(self) -> float:
        """Upper bound on the per-capita birth rate (``p`` bar, or 1 for assortative)."""
        if self.is_assortative:
            return 1.0
        return self.capability.upper

    def growth_lower(self) -> float:
        if self.is_assortative:
            return 1.0
        return self.capability.lower

    def rate_bound(self) -> float:
        """Constant ``m_bar`` bounding ``int m(x,y;mu) mu(dx)`` for the measure rates."""
        if self.variant == "assortative_averaged":
            return self.preference.upper / self.preference.lower
        return self.growth_upper()

    def population_matrix(self, traits, constants: MatingConstants | None = None) -> np.ndarray:
        x = _traits(traits)
        if self.variant == "semirandom_selfing":
            return semirandom_matrix(x, self.capability, True)
        if self.variant == "semirandom_noselfing":
            return semirandom_matrix(x, self.capability, False)
        if self.variant == "assortative_averaged":
            return assortative_averaged_matrix(x, self.preference, True)
        if self.variant == "assortative_normalized":
            constants = constants or solve_mating_constants_discrete(x, self.preference)
            return normalized_matrix(x, self.preference, constants)
        constants = constants or _solve_constants(x, np.ones_like(x), self.preference, self.capability)
        constants.check(x, np.ones_like(x))
        c = constants.c
        pv = self.capability(x)
        return (c[:, None] + c[None, :]) * self.preference.matrix(x) * np.outer(pv, pv)

    def pair_weights(self, nodes, masses):
        """Birth pair weights ``m(x_i, x_j; mu) mu_i mu_j`` for a measure.

        Returns ``("product", v)`` when the weights factor as ``v_i v_j``
        (semi-random mating), else ``("matrix", W)``.
        """
        nodes = np.asarray(nodes, dtype=float)
        masses = np.asarray(masses, dtype=float)
        if self.variant in ("semirandom_selfing", "semirandom_noselfing"):
            v = self.capability(nodes) * masses
            total = v.sum()
            if total <= 0:
                return "product", np.zeros_like(v)
            return "product", v / np.sqrt(total)
        A = self.preference.matrix(nodes)
        if self.variant == "assortative_averaged":
            row = A @ masses
            safe = np.where(row > 0, row, 1.0)
            m = 0.5 * A / safe[:, None] + 0.5 * A / safe[None, :]
            return "matrix", m * np.outer(masses, masses)
        p = self.capability if self.variant == "general_cumulative" else None
        keep = masses > 0
        W = np.zeros_like(A)
        if not np.any(keep):
            return "matrix", W
        const = _solve_constants(nodes[keep], masses[keep], self.preference, p)
        c = np.zeros_like(nodes)
        c[keep] = const.c
        pv = _cap(p, nodes)
        W = (c[:, None] + c[None, :]) * A * np.outer(pv * masses, pv * masses)
        return "matrix", W

"""Death, interaction and competition rates shared by the simulators."""

from __future__ import annotations

from dataclasses import dataclass
from numbers import Real
from typing import Callable, Union

import numpy as np

RateFn = Union[float, Callable]


def _is_const(f) -> bool:
    return isinstance(f, Real)


@dataclass(frozen=True)
class DemographyParams:
    """Natural death ``D(x)``, interaction intensity ``I(x)`` and competition kernel ``U(x, y)``.

    Each may be a nonnegative constant or a vectorized callable; for
    callables the bounds must be declared (``*_upper`` / ``*_lower``).
    ``U`` must be symmetric; the competition sum includes the focal
    individual itself (set ``U(x, x) = 0`` to exclude it).
    """

    D: RateFn = 0.0
    I: RateFn = 0.0
    U: RateFn = 0.0
    D_bounds: tuple | None = None
    I_bounds: tuple | None = None
    U_bounds: tuple | None = None

    def __post_init__(self):
        for name in ("D", "I", "U"):
            f = getattr(self, name)
            b = getattr(self, f"{name}_bounds")
            if _is_const(f):
                if f < 0:
                    raise ValueError(f"{name} must be nonnegative")
                object.__setattr__(self, f"{name}_bounds", (float(f), float(f)))
            elif b is None:
                raise ValueError(f"bounds for non-constant {name} must be declared")
            elif not 0 <= b[0] <= b[1]:
                raise ValueError(f"{name} bounds must satisfy 0 <= lower <= upper")

    @classmethod
    def constants(cls, D: float, I: float, U: float) -> "DemographyParams":
        return cls(float(D), float(I), float(U))

    @property
    def constant_D(self) -> bool:
        return _is_const(self.D)

    @property
    def constant_I(self) -> bool:
        return _is_const(self.I)

    @property
    def constant_U(self) -> bool:
        return _is_const(self.U)

    def death(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.constant_D:
            return np.full(x.shape, float(self.D))
        return np.asarray(self.D(x), dtype=float)

    def interaction(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.constant_I:
            return np.full(x.shape, float(self.I))
        return np.asarray(self.I(x), dtype=float)

    def competition(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.constant_U:
            return np.full(np.broadcast(x, y).shape, float(self.U))
        return np.asarray(self.U(x, y), dtype=float)

    def competition_field(self, at, nodes, weights) -> np.ndarray:
        """``sum_j U(at_i, nodes_j) weights_j`` for each point of ``at``."""
        at = np.asarray(at, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if self.constant_U:
            return np.full(at.shape, float(self.U) * weights.sum())
        return self.competition(at[:, None], np.asarray(nodes, dtype=float)[None, :]) @ weights

    def check_bounds(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        ok = True
        for vals, (lo, hi) in ((self.death(x), self.D_bounds), (self.interaction(x), self.I_bounds)):
            ok &= bool(np.all((vals >= lo - 1e-12) & (vals <= hi + 1e-12)))
        U = self.competition(x[:, None], x[None, :])
        lo, hi = self.U_bounds
        ok &= bool(np.all((U >= lo - 1e-12) & (U <= hi + 1e-12)))
        ok &= bool(np.allclose(U, U.T))
        return ok

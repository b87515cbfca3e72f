"""Mass-and-mean exact operations on pmfs over uniform lattices."""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve


def convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full linear convolution of two nonnegative pmfs.

    FFT roundoff can leave values of order 1e-17 below zero; those are
    clipped.
    """
    if min(a.size, b.size) <= 64:
        out = np.convolve(a, b)
    else:
        out = fftconvolve(a, b)
    np.maximum(out, 0.0, out=out)
    return out


def halve_sum(pmf: np.ndarray, other: np.ndarray | None = None) -> np.ndarray:
    """Pmf of ``(A + B) / 2`` for independent lattice variables.

    ``A`` and ``B`` live on the same lattice ``o + k h`` (``k < L``); their
    sum lives on ``2o + k h`` and its half on ``o + k h / 2``. Half-integer
    nodes are split evenly between their neighbours, which keeps mass and
    mean exact. The result lives on the input lattice.
    """
    s = convolve(pmf, pmf if other is None else other)
    return halve_lattice(s)


def halve_lattice(s: np.ndarray) -> np.ndarray:
    """Map a pmf on ``2o + k h`` (length ``2L - 1``) to ``(.)/2`` on ``o + k h``."""
    L = (s.size + 1) // 2
    out = s[0::2].copy()
    odd = 0.5 * s[1::2]
    out[: L - 1] += odd
    out[1:L] += odd
    return out


def tilt_mean(pmf: np.ndarray, offsets: np.ndarray, target: float) -> np.ndarray:
    """Reweight by ``1 + lam (k - m)`` so that ``sum(offsets * pmf) == target``."""
    total = pmf.sum()
    m = np.dot(offsets, pmf) / total
    var = np.dot((offsets - m) ** 2, pmf) / total
    if var == 0 or m == target:
        return pmf
    lam = (target - m) / var
    out = pmf * (1.0 + lam * (offsets - m))
    if np.any(out < 0):
        raise ValueError("mean correction too large for a positive tilt")
    return out


def hat_projection(cdf, partial_mean, centers: np.ndarray, spacing: float) -> np.ndarray:
    """Integrate a law against the linear hat functions centred at ``centers``.

    ``cdf(z)`` and ``partial_mean(z) = int_{-inf}^z t dF(t)`` describe the
    law. Since the hats form a partition of unity that also reproduces
    linear functions, the resulting node weights have exactly the mass and
    mean of the law.
    """
    h = spacing
    c = np.asarray(centers, dtype=float)
    H0, H1, H2 = cdf(c - h), cdf(c), cdf(c + h)
    G0, G1, G2 = partial_mean(c - h), partial_mean(c), partial_mean(c + h)
    left = (G1 - G0) - (c - h) * (H1 - H0)
    right = (c + h) * (H2 - H1) - (G2 - G1)
    return np.maximum((left + right) / h, 0.0)

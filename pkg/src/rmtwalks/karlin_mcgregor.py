"""
Determinantal densities for nonintersecting Brownian motions started from
the equally spaced grid ``x_i = (2i - k)/k``.

The determinant of the heat-kernel matrix on the grid has a closed form.
Writing ``delta = exp(4/(t k^2))``::

    det p_t(x_i, x_j) = (2 pi t)^{-(k+1)/2} * delta^{-sum_j j^2}
                        * prod_{l=1}^{k} delta^{l(l-1)/2}
                        * prod_{j=1}^{k} (delta^j - 1)^{k+1-j}

This follows from expanding ``(x_i - x_j)^2`` and recognising a Vandermonde
determinant in the nodes ``delta^i``.  Typeset versions of this identity
are known to carry typos in the exponent and in the base of the inner
determinant (``e^{2ij/(tk^2)}`` against the correct ``e^{4ij/(tk^2)}``).
This module implements the form above and checks it against dense
determinants.  Everything is accumulated in log-space because the value is
below ``1e-300`` well before ``k = 20``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InvalidArgumentError
from .numerics import slogdet_dense

__all__ = [
    "Grid",
    "Lemma2Result",
    "NormalizationConstant",
    "heat_kernel",
    "km_density",
    "lemma2_value",
    "bridge_midtime_density",
    "bridge_midtime_log_density",
    "grid_heat_log_det",
    "bridge_top_cdf",
    "gue_density",
    "normalization_constant",
    "as_configuration",
]


@dataclass(frozen=True)
class Grid:
    """Starting/ending positions of the ``k + 1`` walkers."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidArgumentError("k must be an integer >= 1")

    @property
    def points(self) -> np.ndarray:
        i = np.arange(self.k + 1)
        return (2 * i - self.k) / self.k

    def __len__(self):
        return self.k + 1


def as_configuration(y, length: int | None = None) -> np.ndarray:
    """Validate a strictly increasing, finite configuration."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InvalidArgumentError("configuration must be one-dimensional")
    if length is not None and y.size != length:
        raise InvalidArgumentError(f"configuration must have length {length}, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("configuration entries must be finite")
    if np.any(np.diff(y) <= 0):
        raise InvalidArgumentError("configuration must be strictly increasing")
    return y


def heat_kernel(t, a, b):
    """One-dimensional heat kernel ``p_t(a, b)``."""
    if not np.all(np.asarray(t) > 0):
        raise InvalidArgumentError("t must be positive")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.exp(-((a - b) ** 2) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    return float(out) if out.ndim == 0 else out


def _log_heat_matrix_det(t: float, starts: np.ndarray, ends: np.ndarray) -> tuple[float, float]:
    m = heat_kernel(t, starts[:, None], ends[None, :])
    return slogdet_dense(np.atleast_2d(m))


def km_density(t: float, starts, ends) -> float:
    """Karlin-McGregor determinant ``det(p_t(x_i, y_j))``."""
    if not t > 0:
        raise InvalidArgumentError("t must be positive")
    starts = np.asarray(starts, dtype=float).ravel()
    ends = np.asarray(ends, dtype=float).ravel()
    if starts.size != ends.size:
        raise InvalidArgumentError("starts and ends must have equal length")
    sign, logdet = _log_heat_matrix_det(t, starts, ends)
    return sign * math.exp(logdet) if sign != 0 else 0.0


@dataclass(frozen=True)
class Lemma2Result:
    log_value: float
    log_lower_bound: float  # log k^{-k^2}; meaningful for t = 2

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def lower_bound(self) -> float:
        return math.exp(self.log_lower_bound)


def lemma2_value(t: float, k: int) -> Lemma2Result:
    """Closed-form ``det(p_t(x_i, x_j))`` on the grid, in log-space."""
    if not t > 0:
        raise InvalidArgumentError("t must be positive")
    if int(k) != k or not 1 <= k <= 200:
        raise InvalidArgumentError("k must be an integer in [1, 200]")
    k = int(k)
    log_delta = 4.0 / (t * k * k)
    sum_sq = k * (k + 1) * (2 * k + 1) // 6
    tri = sum(l * (l - 1) // 2 for l in range(1, k + 1))
    log_val = -0.5 * (k + 1) * math.log(2 * math.pi * t)
    log_val += log_delta * (tri - sum_sq)
    for j in range(1, k + 1):
        log_val += (k + 1 - j) * math.log(math.expm1(j * log_delta))
    return Lemma2Result(log_val, -k * k * math.log(k))


def grid_heat_log_det(grid: Grid, y) -> float:
    """``log det p_1(x_i, y_j)`` for ordered ``y`` via its Vandermonde factorization.

    ``exp(x_i y_j) = exp(-y_j) z_j^i`` with ``z_j = exp(2 y_j / k)``, so the
    determinant is a product of Gaussian factors and ``prod_{i<j} (z_j - z_i)``.
    The differences are formed with ``expm1`` and never cancel.
    """
    k = grid.k
    y = as_configuration(y, k + 1)
    x = grid.points
    out = -0.5 * (k + 1) * math.log(2 * math.pi) - 0.5 * float(np.dot(x, x))
    out -= float(np.sum(0.5 * y * y + y))
    iu = np.triu_indices(k + 1, 1)
    yi, yj = y[iu[0]], y[iu[1]]
    out += float(np.sum(2.0 * yi / k + np.log(np.expm1(2.0 * (yj - yi) / k))))
    return out


def bridge_midtime_log_density(grid: Grid, y) -> float:
    return 2.0 * grid_heat_log_det(grid, y) - lemma2_value(2.0, grid.k).log_value


def bridge_midtime_density(grid: Grid, y) -> float:
    """Density at time 1 of nonintersecting bridges pinned to the grid at t=0, 2."""
    return math.exp(bridge_midtime_log_density(grid, y))


def bridge_top_cdf(grid: Grid, s):
    """``P(max_j y_j <= s)`` for the mid-time bridge configuration.

    Integrating the product of the two determinants over ``(-inf, s]^{k+1}``
    (Andreief) and using ``p_1(a, y) p_1(y, b) = p_2(a, b) N(y; (a+b)/2, 1/2)``
    gives ``det[p_2(x_i, x_j) Phi(sqrt(2)(s - (x_i + x_j)/2))] / det p_2``.
    """
    x = grid.points
    p2 = heat_kernel(2.0, x[:, None], x[None, :])
    sign0, log0 = slogdet_dense(p2)
    mid = 0.5 * (x[:, None] + x[None, :])

    def one(v):
        sign, logdet = slogdet_dense(p2 * ndtr(math.sqrt(2.0) * (v - mid)))
        return 0.0 if sign == 0 else sign * sign0 * math.exp(logdet - log0)

    s_arr = np.asarray(s, dtype=float)
    out = np.array([one(v) for v in s_arr.ravel()]).reshape(s_arr.shape)
    return float(out) if out.ndim == 0 else out


def gue_density(n: int, b) -> float:
    """Joint eigenvalue density of the n x n GUE on the ordered chamber."""
    if int(n) != n or n < 1:
        raise InvalidArgumentError("n must be a positive integer")
    b = as_configuration(b, int(n))
    log_c = 0.5 * n * (n - 1) * math.log(2.0) - 0.5 * n * math.log(math.pi)
    log_c -= sum(math.lgamma(j + 1) for j in range(1, n))
    diffs = b[None, :] - b[:, None]
    iu = np.triu_indices(n, 1)
    log_v = 2.0 * np.sum(np.log(np.abs(diffs[iu])))
    return math.exp(log_c + log_v - np.sum(b * b))


@dataclass(frozen=True)
class NormalizationConstant:
    log_value: float
    sign: int
    # False would mean the re-derived Gaussian exponent disagrees with
    # (k+1)(k+2)/(3k); kept as a runtime check on the algebra.
    matches_reference_exponent: bool

    @property
    def value(self) -> float:
        return self.sign * math.exp(self.log_value)


def normalization_constant(k: int) -> NormalizationConstant:
    """Constant making the Coulomb-gas integrand a probability density on R^{k+1}.

    ``C'_k = exp(-sum_i x_i^2) / (det p_2(x_i, x_j) (k+1)! (2 pi)^{k+1})`` where
    ``sum_i x_i^2 = (k+1)(k+2)/(3k)``.
    """
    if int(k) != k or not 1 <= k <= 200:
        raise InvalidArgumentError("k must be an integer in [1, 200]")
    k = int(k)
    exponent = float(np.sum(Grid(k).points ** 2))
    reference = (k + 1) * (k + 2) / (3 * k)
    log_c = -exponent - lemma2_value(2.0, k).log_value - math.lgamma(k + 2) - (k + 1) * math.log(2 * math.pi)
    return NormalizationConstant(log_c, 1, math.isclose(exponent, reference, rel_tol=1e-12))

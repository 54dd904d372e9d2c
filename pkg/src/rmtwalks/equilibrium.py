"""
Equilibrium measure of the log-normal weight with total mass ``k + 1``.

Support endpoints, density, the auxiliary function ``h`` and the edge scale
``B_k = [-(1/2) sqrt(b - a) h(b)]^{2/3}``.  The bracket in ``B_k`` is placed
so that the density near ``b`` matches the Airy edge,
``psi(x) ~ (1/2pi) sqrt(b - a) |h(b)| sqrt(b - x)``, which reproduces
``B_k ~ k^{7/6}/sqrt(2)``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidArgumentError
from .numerics import gauss_legendre

__all__ = [
    "EquilibriumData",
    "endpoints",
    "psi",
    "psi_mass",
    "h_func",
    "h_at_b",
    "edge_scale",
    "endpoint_asymptotics_check",
    "semicircle_profile",
]


@dataclass(frozen=True)
class EquilibriumData:
    k: int
    a: float
    b: float
    B_k: float
    sqrt_a: float
    sqrt_b: float


def _check_k(k):
    if int(k) != k or k < 1:
        raise InvalidArgumentError("k must be an integer >= 1")
    return int(k)


def _sqrt_endpoints(k: int) -> tuple[float, float, float, float]:
    """``(sqrt_a, sqrt_b, p, q)`` with ``sqrt_a = p - q``, ``sqrt_b = p + q``.

    ``q^2 = e^{2/k} (e^{(2k+2)/k^2} - 1)`` is formed with ``expm1`` and
    ``sqrt_a`` as ``e^{2/k}/sqrt_b``, so neither difference cancels.
    """
    p = math.exp((2 * k + 1) / (k * k))
    radicand = math.exp(2.0 / k) * math.expm1((2 * k + 2) / (k * k))
    if not radicand > 0:
        raise ArithmeticError("negative radicand in endpoint formula")
    q = math.sqrt(radicand)
    sqrt_b = p + q
    sqrt_a = math.exp(2.0 / k) / sqrt_b
    return sqrt_a, sqrt_b, p, q


def endpoints(k: int) -> EquilibriumData:
    k = _check_k(k)
    sa, sb, _, _ = _sqrt_endpoints(k)
    return EquilibriumData(k, sa * sa, sb * sb, edge_scale(k), sa, sb)


def psi(x, k: int):
    """Equilibrium density on ``[a, b]``."""
    k = _check_k(k)
    sa, sb, _, _ = _sqrt_endpoints(k)
    a, b = sa * sa, sb * sb
    x = np.asarray(x, dtype=float)
    if np.any((x < a) | (x > b)):
        raise DomainError(f"x outside the support [{a}, {b}]")
    r = np.sqrt(np.maximum((b - x) * (x - a), 0.0))
    out = k * k / (2 * np.pi * x) * np.arctan(r / (sa * sb + x))
    return float(out) if out.ndim == 0 else out


def psi_mass(k: int, order: int = 200) -> float:
    """``int_a^b psi`` by Gauss-Legendre in ``theta`` with ``x = a + (b - a)(1 - cos theta)/2``.

    The substitution absorbs the square-root zeros at both endpoints, so the
    integrand is smooth and the rule converges geometrically.
    """
    d = endpoints(k)
    rule = gauss_legendre(order, 0.0, math.pi)
    half = 0.5 * (d.b - d.a)
    x = d.a + half * (1.0 - np.cos(rule.nodes))
    x = np.clip(x, d.a, d.b)
    return float(np.dot(rule.weights, psi(x, k) * half * np.sin(rule.nodes)))


def h_func(z, k: int):
    """``h(z) = k^2/(2 z R(z)) log((sqrt(ab) + z - R)/(sqrt(ab) + z + R))``.

    ``R(z) = sqrt(z - a) sqrt(z - b)`` has its cut on ``[a, b]``; ``h`` is even
    in ``R`` so the branch only matters through continuity.  Real ``z``
    outside the support gives a real result, complex ``z`` a complex one.
    """
    k = _check_k(k)
    sa, sb, _, _ = _sqrt_endpoints(k)
    a, b, c = sa * sa, sb * sb, sa * sb

    def one(zz):
        if isinstance(zz, complex) and zz.imag != 0:
            r = cmath.sqrt(zz - a) * cmath.sqrt(zz - b)
            return k * k / (2 * zz * r) * cmath.log((c + zz - r) / (c + zz + r))
        zz = float(zz.real if isinstance(zz, complex) else zz)
        if not zz > 0:
            raise DomainError("h is defined for z > 0")
        if a <= zz <= b:
            raise DomainError("real z must lie outside [a, b]; pass z + 0j*eps for boundary values")
        r = math.sqrt((zz - a) * (zz - b))
        return k * k / (2 * zz * r) * math.log((c + zz - r) / (c + zz + r))

    if np.ndim(z) == 0:
        return one(z.item() if isinstance(z, np.generic) else z)
    return np.array([one(complex(v) if np.iscomplexobj(z) else float(v)) for v in np.ravel(z)]).reshape(np.shape(z))


def h_at_b(k: int) -> float:
    """Limit of ``h`` at the right endpoint, ``-k^2/(b (sqrt(ab) + b))``."""
    k = _check_k(k)
    sa, sb, _, _ = _sqrt_endpoints(k)
    b = sb * sb
    return -k * k / (b * (sa * sb + b))


def edge_scale(k: int) -> float:
    k = _check_k(k)
    sa, sb, p, q = _sqrt_endpoints(k)
    b_minus_a = 4.0 * p * q
    return (-0.5 * math.sqrt(b_minus_a) * h_at_b(k)) ** (2.0 / 3.0)


@dataclass(frozen=True)
class AsymptoticsReport:
    ks: tuple
    r_a: tuple
    r_b: tuple
    slope_a: float
    slope_b: float


def _residuals(k: int) -> tuple[float, float]:
    sa, sb, _, _ = _sqrt_endpoints(k)
    s = math.sqrt(2.0 / k)
    return sa - (1 - s + 2.0 / k), sb - (1 + s + 2.0 / k)


def endpoint_asymptotics_check(k, ks=(50, 100, 200, 400, 800)) -> AsymptoticsReport:
    """Residuals of the two-term endpoint expansions and their log-log slopes.

    ``k`` may be a single value (its residuals are reported alongside the
    slope over ``ks``) or an iterable that replaces ``ks``.
    """
    grid = tuple(int(v) for v in (k if np.ndim(k) else ks))
    if min(grid) < 4:
        raise InvalidArgumentError("k must be >= 4")
    if np.ndim(k) == 0 and int(k) not in grid:
        grid = tuple(sorted(grid + (int(k),)))
    ra, rb = zip(*(_residuals(v) for v in grid))
    lk = np.log(grid)
    slope_a = float(np.polyfit(lk, np.log(np.abs(ra)), 1)[0])
    slope_b = float(np.polyfit(lk, np.log(np.abs(rb)), 1)[0])
    return AsymptoticsReport(grid, tuple(ra), tuple(rb), slope_a, slope_b)


@dataclass(frozen=True)
class SemicircleValue:
    scaled_density: float
    target: float
    clamped: bool


def semicircle_profile(w: float, k: int) -> SemicircleValue:
    """Rescaled density ``psi(1 + 2w/sqrt(k)) (2/sqrt(k))/k`` next to ``sqrt(2 - w^2)/pi``."""
    if abs(w) > math.sqrt(2.0) + 1e-15:
        raise DomainError("|w| must not exceed sqrt(2)")
    k = _check_k(k)
    d = endpoints(k)
    x = 1.0 + 2.0 * w / math.sqrt(k)
    target = math.sqrt(max(2.0 - w * w, 0.0)) / math.pi
    if x <= d.a or x >= d.b:
        return SemicircleValue(0.0, target, True)
    return SemicircleValue(psi(x, k) * 2.0 / math.sqrt(k) / k, target, False)

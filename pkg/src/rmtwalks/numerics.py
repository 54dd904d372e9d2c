"""
Numerical foundation: Gauss-Legendre rules, the Airy function, dense
determinants and an extended-precision Cholesky factorization.

The Airy function is evaluated by its Maclaurin series for moderate
arguments and by the classical asymptotic expansions for large ones.  The
series is summed with extra working precision, because for ``|x|`` near the
switch point its terms grow to ``~exp(2/3 |x|^{3/2})`` before cancelling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .errors import DomainError, InvalidArgumentError, NotPositiveDefiniteError

__all__ = [
    "QuadratureRule",
    "PrecisionContext",
    "gauss_legendre",
    "airy_ai",
    "airy_ai_prime",
    "airy",
    "det_dense",
    "slogdet_dense",
    "cholesky_hp",
]


@dataclass(frozen=True)
class QuadratureRule:
    order: int
    interval: tuple[float, float]
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f):
        """Apply the rule to a vectorized integrand."""
        return float(np.dot(self.weights, f(self.nodes)))


@dataclass(frozen=True)
class PrecisionContext:
    """Mantissa size (in bits) for extended-precision arithmetic."""

    mantissa_bits: int = 256

    def __post_init__(self):
        if int(self.mantissa_bits) < 53:
            raise InvalidArgumentError("mantissa_bits must be >= 53")

    def workprec(self):
        return mpmath.workprec(int(self.mantissa_bits))


# --------------------------------------------------------------------------
# Gauss-Legendre
# --------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _legendre_reference(order: int) -> tuple[np.ndarray, np.ndarray]:
    n = order
    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for m in range(2, n + 1):
            p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
        # p1 = P_n, p0 = P_{n-1}
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for m in range(2, n + 1):
        p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
    dp = n * (x * p1 - p0) / (x * x - 1.0) if n > 1 else np.ones_like(x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    # ascending order, exact symmetry
    x = x[::-1].copy()
    w = w[::-1].copy()
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(order: int, lo: float = -1.0, hi: float = 1.0) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` nodes mapped affinely onto ``(lo, hi)``.

    Nodes are the roots of the Legendre polynomial found by Newton iteration
    on the three-term recurrence.
    """
    if int(order) != order or order < 1:
        raise InvalidArgumentError(f"order must be a positive integer, got {order!r}")
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidArgumentError("interval bounds must be finite")
    if not lo < hi:
        raise InvalidArgumentError("need lo < hi")
    order = int(order)
    if order == 1:
        t = np.zeros(1)
        w = np.full(1, 2.0)
    else:
        t, w = _legendre_reference(order)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid + half * t
    weights = half * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(order, (float(lo), float(hi)), nodes, weights)


# --------------------------------------------------------------------------
# Airy function
# --------------------------------------------------------------------------

AIRY_MAX_ARG = 200.0
# Beyond this |x| the asymptotic series reach ~1e-18 relative accuracy.
AIRY_SWITCH = 10.0
_SERIES_BITS = 192


def _airy_series(x: float) -> tuple[float, float]:
    with mpmath.workprec(_SERIES_BITS):
        xm = mpmath.mpf(x)
        x3 = xm ** 3
        c1 = 1 / (mpmath.cbrt(9) * mpmath.gamma(mpmath.mpf(2) / 3))
        c2 = 1 / (mpmath.cbrt(3) * mpmath.gamma(mpmath.mpf(1) / 3))
        eps = mpmath.mpf(2) ** (-_SERIES_BITS + 8)

        f = t = mpmath.mpf(1)
        g = s = xm
        fp = tp = xm * xm / 2
        gp = sp = mpmath.mpf(1)
        k = 1
        while True:
            t = t * x3 / ((3 * k - 1) * (3 * k))
            s = s * x3 / ((3 * k) * (3 * k + 1))
            sp = sp * x3 / ((3 * k) * (3 * k - 2))
            f += t
            g += s
            gp += sp
            if k >= 2:
                tp = tp * x3 / ((3 * k - 3) * (3 * k - 1))
                fp += tp
            if k > 4 and max(abs(t), abs(s), abs(tp), abs(sp)) < eps:
                break
            k += 1
        ai = c1 * f - c2 * g
        aip = c1 * fp - c2 * gp
        return float(ai), float(aip)


@lru_cache(maxsize=1)
def _asymptotic_coefficients(n: int = 40) -> tuple[np.ndarray, np.ndarray]:
    u = [1.0]
    for k in range(1, n):
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216 * k))
    u = np.array(u)
    v = np.array([1.0] + [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(1, n)])
    return u, v


def _truncated_sum(coef: np.ndarray, z: float) -> float:
    """Sum coef[j] * z**j, stopping at the smallest term."""
    total = 0.0
    prev = math.inf
    zj = 1.0
    for c in coef:
        term = c * zj
        if abs(term) > prev:
            break
        total += term
        prev = abs(term)
        if prev < 1e-18 * abs(total):
            break
        zj *= z
    return total


def _airy_asymptotic(x: float) -> tuple[float, float]:
    u, v = _asymptotic_coefficients()
    ax = abs(x)
    zeta = 2.0 / 3.0 * ax ** 1.5
    q = ax ** 0.25
    if x > 0:
        sgn = (-1.0) ** np.arange(len(u))
        su = _truncated_sum(sgn * u, 1.0 / zeta)
        sv = _truncated_sum(sgn * v, 1.0 / zeta)
        e = math.exp(-zeta) / (2.0 * math.sqrt(math.pi))
        return e / q * su, -e * q * sv
    iz2 = 1.0 / (zeta * zeta)
    alt = (-1.0) ** np.arange(len(u) // 2)
    ue = _truncated_sum(alt * u[0::2], iz2)
    uo = _truncated_sum(alt * u[1::2], iz2) / zeta
    ve = _truncated_sum(alt * v[0::2], iz2)
    vo = _truncated_sum(alt * v[1::2], iz2) / zeta
    phase = zeta - math.pi / 4
    c, s = math.cos(phase), math.sin(phase)
    rp = 1.0 / math.sqrt(math.pi)
    return rp / q * (c * ue + s * uo), rp * q * (s * ve - c * vo)


def _airy_scalar(x: float) -> tuple[float, float]:
    if not math.isfinite(x) or abs(x) > AIRY_MAX_ARG:
        raise DomainError(f"Airy argument {x!r} outside [-{AIRY_MAX_ARG}, {AIRY_MAX_ARG}]")
    if abs(x) <= AIRY_SWITCH:
        return _airy_series(x)
    return _airy_asymptotic(x)


def airy(x):
    """Return ``(Ai(x), Ai'(x))`` for a scalar or array argument."""
    arr = np.asarray(x, dtype=float)
    flat = arr.ravel()
    ai = np.empty_like(flat)
    aip = np.empty_like(flat)
    for i, xi in enumerate(flat):
        ai[i], aip[i] = _airy_scalar(float(xi))
    if arr.ndim == 0:
        return float(ai[0]), float(aip[0])
    return ai.reshape(arr.shape), aip.reshape(arr.shape)


def airy_ai(x):
    return airy(x)[0]


def airy_ai_prime(x):
    return airy(x)[1]


# --------------------------------------------------------------------------
# Dense linear algebra
# --------------------------------------------------------------------------

def _check_square(matrix) -> tuple[int, int]:
    shape = (matrix.rows, matrix.cols) if isinstance(matrix, mpmath.matrix) else np.shape(matrix)
    if len(shape) != 2 or shape[0] != shape[1]:
        raise InvalidArgumentError(f"matrix must be square, got shape {shape}")
    if shape[0] > 4096:
        raise InvalidArgumentError("matrix dimension exceeds 4096")
    return shape


def det_dense(matrix, ctx: PrecisionContext | None = None):
    """Determinant by LU factorization with partial pivoting.

    With ``ctx`` the factorization runs in ``ctx.mantissa_bits`` precision
    and entries given as mpmath numbers are used without rounding to double.
    The result is then an ``mpmath.mpf``.
    """
    n, _ = _check_square(matrix)
    if ctx is None:
        a = np.asarray(matrix, dtype=float)
        if not np.all(np.isfinite(a)):
            raise InvalidArgumentError("matrix entries must be finite")
        if n == 0:
            return 1.0
        return float(np.linalg.det(a))
    with ctx.workprec():
        a = mpmath.matrix(matrix) if not isinstance(matrix, mpmath.matrix) else matrix.copy()
        if n == 0:
            return mpmath.mpf(1)
        return mpmath.det(a)


def slogdet_dense(matrix) -> tuple[float, float]:
    """``(sign, log|det|)`` in double precision."""
    _check_square(matrix)
    sign, logdet = np.linalg.slogdet(np.asarray(matrix, dtype=float))
    return float(sign), float(logdet)


def cholesky_hp(matrix, ctx: PrecisionContext | None = None) -> mpmath.matrix:
    """Lower-triangular Cholesky factor computed at ``ctx.mantissa_bits``.

    Raises :class:`NotPositiveDefiniteError` with the offending pivot index
    when a pivot is not strictly positive at the working precision.
    """
    ctx = ctx or PrecisionContext()
    n, _ = _check_square(matrix)
    with ctx.workprec():
        a = mpmath.matrix(matrix)
        L = mpmath.zeros(n, n)
        for j in range(n):
            s = a[j, j] - mpmath.fsum(L[j, p] ** 2 for p in range(j))
            if not s > 0:
                raise NotPositiveDefiniteError(j)
            L[j, j] = mpmath.sqrt(s)
            for i in range(j + 1, n):
                L[i, j] = (a[i, j] - mpmath.fsum(L[i, p] * L[j, p] for p in range(j))) / L[j, j]
        return L

"""
Orthonormal polynomials for the log-normal weight

    w(u) = u^{-1} exp(-(k^2/4) (log u)^2),   u > 0,

which governs the mid-time positions of the bridge ensemble after the
substitution ``u = exp(2(y + 1)/k)``.  Its moments are Gaussian integrals,
``m_n = (2 sqrt(pi)/k) exp(n^2/k^2)``, and the recurrence coefficients are
read off an extended-precision Cholesky factor of the Hankel matrix
``H_ij = m_{i+j}``.

The Hankel matrix is badly conditioned: the Cholesky pivot for degree n is
``m_{2n} * prod_{j=1}^{n} (1 - exp(-2j/k^2))``, so forming it loses roughly
``-log2 prod(...)`` bits to cancellation (about 380 bits at k = 60 and
degree 61).  Errors in the off-diagonal entries compound this, and in
practice the recurrence coefficients reach double accuracy only with about
``1.5 * loss + 117`` bits; :func:`required_precision` returns that figure
and :func:`build_basis` refuses to run below it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .errors import DomainError, InsufficientPrecisionError, InvalidArgumentError, NotPositiveDefiniteError
from .numerics import PrecisionContext, cholesky_hp

__all__ = [
    "SWWeight",
    "OrthoBasis",
    "weight",
    "log_weight",
    "standard_sw_weight",
    "relation_check",
    "moment",
    "required_precision",
    "build_basis",
    "eval_phi",
    "eval_phi_all",
    "cd_kernel",
    "cd_kernel_diagonal",
    "y_to_u",
    "u_to_y",
    "edge_threshold",
    "coulomb_log_density",
    "export_table",
]

# Bits kept beyond the cancellation loss; the results are downcast to double.
GUARD_BITS = 64
CONFLUENT_THRESHOLD = 1e-6


@dataclass(frozen=True)
class SWWeight:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidArgumentError("k must be an integer >= 1")

    @property
    def q(self) -> float:
        return math.exp(-1.0 / (2 * self.k * self.k))

    def __call__(self, u):
        return weight(u, self.k)


def _positive(u, name="u"):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)):
        raise DomainError(f"{name} must be positive")
    return u


def log_weight(u, k: int):
    u = _positive(u)
    lu = np.log(u)
    return -(k * k / 4.0) * lu * lu - lu


def weight(u, k: int):
    """``w(u) = u^{-1} exp(-(k^2/4) log(u)^2)``."""
    out = np.exp(log_weight(u, k))
    return float(out) if out.ndim == 0 else out


def standard_sw_weight(x, k: int):
    """The textbook Stieltjes-Wigert weight ``pi^{-1/2} k exp(-k^2 log(x)^2)``."""
    x = _positive(x, "x")
    lx = np.log(x)
    out = k / math.sqrt(math.pi) * np.exp(-(k * k) * lx * lx)
    return float(out) if out.ndim == 0 else out


def relation_check(k: int, x, c: float | None = None) -> float:
    """Relative defect of ``w(u) du = c exp(-(k^2/4) log(x)^2) dx`` at ``u = e^{-2/k^2} x``.

    Substituting gives ``c = e^{-1/k^2}``, the default.  The right-hand side is
    the standard weight with ``k`` replaced by ``k/2``, up to a constant.
    """
    x = _positive(x, "x")
    if c is None:
        c = math.exp(-1.0 / (k * k))
    scale = math.exp(-2.0 / (k * k))
    lhs = weight(scale * x, k) * scale
    rhs = c * np.exp(-(k * k / 4.0) * np.log(x) ** 2)
    return float(np.max(np.abs(lhs / rhs - 1.0)))


def moment(n: int, k: int) -> float:
    """``int_0^inf u^n w(u) du = (2 sqrt(pi)/k) exp(n^2/k^2)``."""
    if int(n) != n or n < 0 or n > 4 * k + 40:
        raise InvalidArgumentError(f"moment order {n} outside [0, 4k+40]")
    return 2.0 * math.sqrt(math.pi) / k * math.exp(n * n / (k * k))


def _moment_mp(n: int, k: int):
    return 2 * mpmath.sqrt(mpmath.pi) / k * mpmath.exp(mpmath.mpf(n * n) / (k * k))


def required_precision(k: int, degree_max: int) -> int:
    """Mantissa bits needed to build the basis up to ``degree_max``."""
    loss = -sum(math.log2(-math.expm1(-2.0 * j / (k * k))) for j in range(1, degree_max + 1))
    return int(math.ceil(53 + GUARD_BITS + 1.5 * loss))


@dataclass(frozen=True)
class OrthoBasis:
    """Recurrence data for the orthonormal polynomials ``p_0 .. p_degree_max``.

    ``u p_n = b_{n+1} p_{n+1} + alpha_n p_n + b_n p_{n-1}``.  ``beta[n-1]``
    holds ``b_n = gamma_{n-1}/gamma_n`` and ``gamma[n]`` the leading
    coefficient of ``p_n``.  The ``*_mp`` tuples keep the extended-precision
    values for export.
    """

    k: int
    degree_max: int
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    m0: float
    precision_bits: int
    alpha_mp: tuple
    beta_mp: tuple
    gamma_mp: tuple


def build_basis(k: int, degree_max: int | None = None, ctx: PrecisionContext | None = None) -> OrthoBasis:
    """Orthonormal basis for the weight with parameter ``k``.

    ``degree_max`` defaults to ``k + 1``.  Without ``ctx`` the precision is
    ``max(256, required_precision(k, degree_max))``.
    """
    if int(k) != k or k < 1:
        raise InvalidArgumentError("k must be an integer >= 1")
    k = int(k)
    degree_max = k + 1 if degree_max is None else int(degree_max)
    if degree_max < k + 1:
        raise InvalidArgumentError("degree_max must be at least k + 1")
    needed = required_precision(k, degree_max)
    if ctx is None:
        ctx = PrecisionContext(max(256, needed))
    elif ctx.mantissa_bits < needed:
        raise InsufficientPrecisionError(
            f"{ctx.mantissa_bits} bits cannot resolve the Hankel pivots for k={k}, "
            f"degree {degree_max}; use at least {needed} bits",
            required_bits=needed,
        )
    return _build_basis_cached(k, degree_max, int(ctx.mantissa_bits))


@lru_cache(maxsize=32)
def _build_basis_cached(k: int, degree_max: int, bits: int) -> OrthoBasis:
    n = degree_max + 1
    ctx = PrecisionContext(bits)
    with ctx.workprec():
        m = [_moment_mp(j, k) for j in range(2 * n - 1)]
        hankel = mpmath.matrix(n, n)
        for i in range(n):
            for j in range(n):
                hankel[i, j] = m[i + j]
    try:
        L = cholesky_hp(hankel, ctx)
    except NotPositiveDefiniteError as exc:
        raise InsufficientPrecisionError(
            f"Hankel Cholesky failed at pivot {exc.pivot_index}; increase mantissa_bits",
            required_bits=2 * bits,
        ) from exc
    with ctx.workprec():
        floor = mpmath.mpf(2) ** (-(bits - 53 - GUARD_BITS // 2))
        for i in range(n):
            if L[i, i] ** 2 < floor * hankel[i, i]:
                raise InsufficientPrecisionError(
                    f"Hankel pivot {i} lost too many bits at {bits}-bit precision",
                    required_bits=required_precision(k, degree_max),
                )
        # R = L^T, r_ij = L[j, i]
        alpha = []
        beta = []
        for j in range(n - 1):
            a = L[j + 1, j] / L[j, j]
            if j > 0:
                a -= L[j, j - 1] / L[j - 1, j - 1]
            alpha.append(a)
            beta.append(L[j + 1, j + 1] / L[j, j])
        gamma = [1 / L[j, j] for j in range(n)]
        m0 = float(m[0])
    return OrthoBasis(
        k=k,
        degree_max=degree_max,
        alpha=_frozen([float(a) for a in alpha]),
        beta=_frozen([float(b) for b in beta]),
        gamma=_frozen([float(g) for g in gamma]),
        m0=m0,
        precision_bits=bits,
        alpha_mp=tuple(alpha),
        beta_mp=tuple(beta),
        gamma_mp=tuple(gamma),
    )


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def eval_phi_all(basis: OrthoBasis, u, nmax: int | None = None, derivative: bool = False):
    """Weighted functions ``phi_n = sqrt(w) p_n`` for ``n = 0 .. nmax``.

    Returns an array of shape ``(nmax + 1,) + shape(u)``.  With
    ``derivative=True`` also returns ``sqrt(w) p_n'``.  The recurrence is run
    directly on the weighted values, so ``p_n`` itself is never formed.
    """
    nmax = basis.degree_max if nmax is None else int(nmax)
    if not 0 <= nmax <= basis.degree_max:
        raise InvalidArgumentError(f"degree {nmax} outside [0, {basis.degree_max}]")
    u = _positive(u)
    sw = np.exp(0.5 * log_weight(u, basis.k))
    phi = np.empty((nmax + 1,) + u.shape)
    phi[0] = sw / math.sqrt(basis.m0)
    a, b = basis.alpha, basis.beta
    if nmax >= 1:
        phi[1] = (u - a[0]) * phi[0] / b[0]
    for n in range(1, nmax):
        phi[n + 1] = ((u - a[n]) * phi[n] - b[n - 1] * phi[n - 1]) / b[n]
    if not derivative:
        return phi
    dphi = np.empty_like(phi)
    dphi[0] = 0.0
    if nmax >= 1:
        dphi[1] = phi[0] / b[0]
    for n in range(1, nmax):
        dphi[n + 1] = ((u - a[n]) * dphi[n] + phi[n] - b[n - 1] * dphi[n - 1]) / b[n]
    return phi, dphi


def eval_phi(basis: OrthoBasis, n: int, u):
    """``phi_n(u) = sqrt(w(u)) p_n(u)``."""
    if int(n) != n or not 0 <= n <= basis.degree_max:
        raise InvalidArgumentError(f"degree {n} outside [0, {basis.degree_max}]")
    out = eval_phi_all(basis, u, int(n))[int(n)]
    return float(out) if np.ndim(out) == 0 else out


def _cd_factors(basis: OrthoBasis, u, derivative=False):
    k = basis.k
    if basis.degree_max < k + 1:
        raise InvalidArgumentError("basis must reach degree k + 1")
    if derivative:
        phi, dphi = eval_phi_all(basis, u, k + 1, derivative=True)
        return phi[k + 1], phi[k], dphi[k + 1], dphi[k]
    phi = eval_phi_all(basis, u, k + 1)
    return phi[k + 1], phi[k]


def cd_kernel_diagonal(basis: OrthoBasis, x):
    """``K_k(x, x)`` from the confluent form of the Christoffel-Darboux formula.

    The logarithmic derivative of the weight cancels in
    ``phi'_{k+1} phi_k - phi'_k phi_{k+1}``, so only the polynomial
    derivatives (scaled by ``sqrt(w)``) enter.
    """
    f, g, df, dg = _cd_factors(basis, x, derivative=True)
    return basis.beta[basis.k] * (df * g - dg * f)


def cd_kernel(basis: OrthoBasis, x, y):
    """Christoffel-Darboux kernel built from ``phi_k`` and ``phi_{k+1}``.

    Broadcasts over ``x`` and ``y``.  Pairs closer than
    ``1e-6 * max(1, |x|)`` use the confluent form at their midpoint.
    """
    x = _positive(x, "x")
    y = _positive(y, "y")
    x, y = np.broadcast_arrays(x, y)
    fx, gx = _cd_factors(basis, x)
    fy, gy = _cd_factors(basis, y)
    d = x - y
    near = np.abs(d) <= CONFLUENT_THRESHOLD * np.maximum(1.0, np.abs(x))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = basis.beta[basis.k] * (fx * gy - gx * fy) / np.where(near, 1.0, d)
    if np.any(near):
        out = np.where(near, cd_kernel_diagonal(basis, 0.5 * (x + y)), out)
    return float(out) if out.ndim == 0 else out


def y_to_u(y, k: int):
    out = np.exp(2.0 * (np.asarray(y, dtype=float) + 1.0) / k)
    return float(out) if out.ndim == 0 else out


def u_to_y(u, k: int):
    u = _positive(u)
    out = 0.5 * k * np.log(u) - 1.0
    return float(out) if out.ndim == 0 else out


def edge_threshold(k: int, xi: float) -> float:
    """Position ``sqrt(2k) + xi / (sqrt(2) k^{1/6})`` of the rightmost-particle cut."""
    return math.sqrt(2.0 * k) + xi / (math.sqrt(2.0) * k ** (1.0 / 6.0))


def coulomb_log_density(k: int, y) -> float:
    """Unnormalized log-density of the mid-time Coulomb gas on R^{k+1}.

    ``sum_{i<j} 2 log|e^{2y_j/k} - e^{2y_i/k}| - sum_j (y_j^2 + 2 y_j)``;
    coincident points give ``-inf``.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (k + 1,):
        raise InvalidArgumentError(f"configuration must have length {k + 1}")
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("configuration entries must be finite")
    z = np.exp(2.0 * y / k)
    iu = np.triu_indices(k + 1, 1)
    gaps = np.abs(z[iu[1]] - z[iu[0]])
    if np.any(gaps == 0):
        return -math.inf
    return float(2.0 * np.sum(np.log(gaps)) - np.sum(y * y + 2.0 * y))


def export_table(basis: OrthoBasis, digits: int = 30) -> str:
    """Plain-text table ``n alpha_n beta_n gamma_n`` (``-`` where undefined)."""
    lines = [f"# k={basis.k} degree_max={basis.degree_max} precision_bits={basis.precision_bits}",
             "n alpha beta gamma"]
    with mpmath.workprec(basis.precision_bits):
        for n in range(basis.degree_max + 1):
            a = mpmath.nstr(basis.alpha_mp[n], digits) if n < len(basis.alpha_mp) else "-"
            b = mpmath.nstr(basis.beta_mp[n - 1], digits) if n >= 1 else "-"
            g = mpmath.nstr(basis.gamma_mp[n], digits)
            lines.append(f"{n} {a} {b} {g}")
    return "\n".join(lines) + "\n"

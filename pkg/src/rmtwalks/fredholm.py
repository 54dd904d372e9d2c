"""
Fredholm determinants ``det(1 - K|_J)`` by Nystrom discretization.

The operator is replaced by the symmetric matrix
``G_ij = sqrt(w_i) K(x_i, x_j) sqrt(w_j)`` on Gauss-Legendre nodes, whose
determinant converges geometrically for analytic kernels.  Semi-infinite
intervals are truncated: the upper end is pushed out by doubling until the
determinant moves by less than ``1e-12``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import stieltjes_wigert as sw
from .equilibrium import endpoints
from .errors import InvalidArgumentError, TruncationFailureError
from .numerics import airy, gauss_legendre

__all__ = [
    "KernelSpec",
    "DetResult",
    "airy_kernel",
    "sine_kernel",
    "airy_kernel_spec",
    "sine_kernel_spec",
    "cd_kernel_spec",
    "nystrom_matrix",
    "fredholm_det",
    "f_tw",
    "f_sine",
    "edge_probability",
    "bulk_probability",
    "bulk_window",
    "scaled_kernel_error",
    "DEFAULT_ORDER",
]

DEFAULT_ORDER = 120
TRUNCATION_TOL = 1e-12
MAX_DOUBLINGS = 20


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric kernel and how to evaluate it on node sets.

    ``evaluator(x, y)`` broadcasts; ``diagonal_evaluator(x)`` gives ``K(x, x)``.
    Kernels of integrable form ``c (f(x) g(y) - g(x) f(y))/(x - y)`` may
    supply ``factors(x) -> (f, g, c)`` so that node matrices need only
    ``O(n)`` function evaluations.  ``tail_scale`` is the first truncation
    length used on semi-infinite intervals.  With ``log_scale`` the nodes are
    ``t = log u`` and the matrix is that of ``K(e^s, e^t) e^{(s+t)/2}``, which
    suits kernels whose mass is log-normally spread.
    """

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    diagonal_evaluator: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float] = (-math.inf, math.inf)
    factors: Optional[Callable[[np.ndarray], tuple]] = None
    tail_scale: float = 1.0
    confluent_threshold: float = 0.0
    log_scale: bool = False

    def matrix(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.log_scale:
            u = np.exp(x)
            h = np.sqrt(u)
            return h[:, None] * self._matrix(u) * h[None, :]
        return self._matrix(x)

    def _matrix(self, x: np.ndarray) -> np.ndarray:
        if self.factors is None:
            m = np.array(self.evaluator(x[:, None], x[None, :]), dtype=float)
            np.fill_diagonal(m, self.diagonal_evaluator(x))
            return m
        f, g, c = self.factors(x)
        d = x[:, None] - x[None, :]
        near = np.abs(d) <= self.confluent_threshold * np.maximum(1.0, np.abs(x))[:, None]
        np.fill_diagonal(near, True)
        with np.errstate(invalid="ignore", divide="ignore"):
            m = c * (f[:, None] * g[None, :] - g[:, None] * f[None, :]) / np.where(near, 1.0, d)
        diag = self.diagonal_evaluator(x)
        np.fill_diagonal(m, diag)
        off = near & ~np.eye(len(x), dtype=bool)
        if np.any(off):
            i, j = np.nonzero(off)
            m[i, j] = self.diagonal_evaluator(0.5 * (x[i] + x[j]))
        return m


@dataclass(frozen=True)
class DetResult:
    value: float
    nodes_used: int
    node_doubling_error: float
    truncation_error: float
    interval: tuple[float, float] = field(default=(math.nan, math.nan))


# --------------------------------------------------------------------------
# Limit kernels
# --------------------------------------------------------------------------

def airy_kernel(a, b):
    """Airy kernel; the diagonal uses ``Ai'(a)^2 - a Ai(a)^2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    ai_a, aip_a = airy(a)
    ai_b, aip_b = airy(b)
    d = a - b
    same = d == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (ai_a * aip_b - aip_a * ai_b) / np.where(same, 1.0, d)
    out = np.where(same, aip_a * aip_a - a * ai_a * ai_a, out)
    return float(out) if np.ndim(out) == 0 else out


def sine_kernel(a, b):
    out = np.sinc(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _airy_factors(x):
    ai, aip = airy(x)
    return ai, aip, 1.0


def _airy_diag(x):
    ai, aip = airy(x)
    return aip * aip - x * ai * ai


def airy_kernel_spec() -> KernelSpec:
    return KernelSpec(airy_kernel, _airy_diag, factors=_airy_factors, tail_scale=8.0)


def sine_kernel_spec() -> KernelSpec:
    return KernelSpec(sine_kernel, lambda x: np.ones_like(np.asarray(x, dtype=float)))


def cd_kernel_spec(basis: sw.OrthoBasis, log_scale: bool = False) -> KernelSpec:
    """Christoffel-Darboux kernel of ``basis`` as a :class:`KernelSpec`.

    The domain is ``(0, inf)`` in ``u``, or the whole line in ``t = log u``
    when ``log_scale`` is set.
    """
    k = basis.k
    d = endpoints(k)

    def factors(x):
        phi = sw.eval_phi_all(basis, x, k + 1)
        return phi[k + 1], phi[k], basis.beta[k]

    return KernelSpec(
        evaluator=lambda x, y: sw.cd_kernel(basis, x, y),
        diagonal_evaluator=lambda x: sw.cd_kernel_diagonal(basis, x),
        domain=(-math.inf, math.inf) if log_scale else (0.0, math.inf),
        factors=factors,
        tail_scale=0.5 * math.log(d.b / d.a) if log_scale else 0.5 * (d.b - d.a),
        confluent_threshold=sw.CONFLUENT_THRESHOLD,
        log_scale=log_scale,
    )


# --------------------------------------------------------------------------
# Determinants
# --------------------------------------------------------------------------

def nystrom_matrix(kernel: KernelSpec, lo: float, hi: float, order: int) -> np.ndarray:
    rule = gauss_legendre(order, lo, hi)
    sq = np.sqrt(rule.weights)
    return sq[:, None] * kernel.matrix(rule.nodes) * sq[None, :]


def _det_finite(kernel: KernelSpec, lo: float, hi: float, order: int) -> float:
    if hi <= lo:
        return 1.0
    g = nystrom_matrix(kernel, lo, hi, order)
    return float(np.linalg.det(np.eye(order) - g))


def _truncate(kernel: KernelSpec, lo: float, order: int) -> tuple[float, float, float]:
    length = kernel.tail_scale
    hi = lo + length
    prev = _det_finite(kernel, lo, hi, order)
    for _ in range(MAX_DOUBLINGS):
        length *= 2.0
        hi_new = lo + length
        val = _det_finite(kernel, lo, hi_new, order)
        move = abs(val - prev)
        if move < TRUNCATION_TOL:
            return hi_new, val, move
        hi, prev = hi_new, val
    raise TruncationFailureError(
        f"truncation of ({lo}, inf) did not settle after {MAX_DOUBLINGS} doublings (last move {move:.3e})"
    )


def fredholm_det(kernel: KernelSpec, interval: tuple[float, float], order: int = DEFAULT_ORDER) -> DetResult:
    """``det(1 - K|_interval)`` with a node-doubling error estimate.

    The value is computed with ``order`` nodes; ``node_doubling_error`` is its
    distance to the ``2 * order`` value on the same (truncated) interval.
    """
    if int(order) != order or order < 8:
        raise InvalidArgumentError("order must be an integer >= 8")
    order = int(order)
    lo, hi = map(float, interval)
    if not math.isfinite(lo):
        raise InvalidArgumentError("lower end must be finite")
    if hi <= lo:
        return DetResult(1.0, order, 0.0, 0.0, (lo, hi))
    trunc_err = 0.0
    if math.isinf(hi):
        hi, value, trunc_err = _truncate(kernel, lo, order)
    else:
        value = _det_finite(kernel, lo, hi, order)
    fine = _det_finite(kernel, lo, hi, 2 * order)
    return DetResult(value, order, abs(value - fine), trunc_err, (lo, hi))


def f_tw(xi: float, order: int = DEFAULT_ORDER) -> DetResult:
    """Tracy-Widom (GUE) distribution function, ``det(1 - A|_(xi, inf))``."""
    if not -10.0 <= xi <= 8.0:
        raise InvalidArgumentError("xi must lie in [-10, 8]")
    return fredholm_det(airy_kernel_spec(), (xi, math.inf), order)


def f_sine(eta: float, order: int = DEFAULT_ORDER) -> DetResult:
    """Bulk gap probability ``det(1 - S|_[-eta, eta])``."""
    if not 0.0 <= eta <= 5.0:
        raise InvalidArgumentError("eta must lie in [0, 5]")
    return fredholm_det(sine_kernel_spec(), (-eta, eta), order)


# --------------------------------------------------------------------------
# Finite-k probabilities
# --------------------------------------------------------------------------

def _basis_for(k: int, basis: sw.OrthoBasis | None) -> sw.OrthoBasis:
    if basis is None:
        return sw.build_basis(k)
    if basis.k != k:
        raise InvalidArgumentError(f"basis was built for k={basis.k}, not k={k}")
    if basis.degree_max < k + 1:
        raise InvalidArgumentError("basis must reach degree k + 1")
    return basis


def edge_probability(k: int, xi: float, basis: sw.OrthoBasis | None = None,
                     order: int = DEFAULT_ORDER) -> DetResult:
    """Probability that every particle lies at or below ``sqrt(2k) + xi/(sqrt(2) k^{1/6})``.

    Exact for the mid-time bridge ensemble with ``k + 1`` particles.
    """
    basis = _basis_for(k, basis)
    t_xi = 2.0 * (sw.edge_threshold(k, xi) + 1.0) / k
    return fredholm_det(cd_kernel_spec(basis, log_scale=True), (t_xi, math.inf), order)


def bulk_window(k: int, eta: float, window: str = "theorem") -> tuple[float, float]:
    """Half-open gap window in ``y``.

    ``"theorem"`` uses the half-width ``pi eta / sqrt(2k)`` (unit mean spacing
    at the centre), ``"proof"`` the alternative ``eta / sqrt(k + 1)``.
    """
    if eta < 0:
        raise InvalidArgumentError("eta must be nonnegative")
    if window == "theorem":
        hw = math.pi * eta / math.sqrt(2.0 * k)
    elif window == "proof":
        hw = eta / math.sqrt(k + 1.0)
    else:
        raise InvalidArgumentError(f"unknown window {window!r}")
    return -hw, hw


def bulk_probability(k: int, eta: float, basis: sw.OrthoBasis | None = None,
                     order: int = DEFAULT_ORDER, window: str = "theorem") -> DetResult:
    """Probability that no particle falls in the centred bulk window."""
    basis = _basis_for(k, basis)
    lo, hi = bulk_window(k, eta, window)
    return fredholm_det(cd_kernel_spec(basis, log_scale=True), (2.0 * (lo + 1.0) / k, 2.0 * (hi + 1.0) / k), order)


def scaled_kernel_error(k: int, regime: str, basis: sw.OrthoBasis | None = None, n_grid: int = 41) -> float:
    """Sup distance between the rescaled finite-k kernel and its limit on a grid.

    ``bulk``: centre ``e^{2/k}``, scale ``K_k(x0, x0)``, target sine kernel on
    ``[-2, 2]^2``.  ``edge``: centre ``b``, scale ``B_k``, target Airy kernel
    on ``[-2, 4]^2``.
    """
    basis = _basis_for(k, basis)
    if regime == "bulk":
        x0 = math.exp(2.0 / k)
        scale = float(sw.cd_kernel_diagonal(basis, x0))
        s = np.linspace(-2.0, 2.0, n_grid)
        target = sine_kernel(s[:, None], s[None, :])
    elif regime == "edge":
        d = endpoints(k)
        x0, scale = d.b, d.B_k
        s = np.linspace(-2.0, 4.0, n_grid)
        target = airy_kernel_spec().matrix(s)
    else:
        raise InvalidArgumentError("regime must be 'edge' or 'bulk'")
    x = x0 + s / scale
    finite = cd_kernel_spec(basis).matrix(x) / scale
    return float(np.max(np.abs(finite - target)))

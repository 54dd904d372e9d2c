"""Fast invariant suite behind ``rmtwalks selftest``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import mpmath
import numpy as np
from scipy import special

from . import equilibrium as eq
from . import fredholm as fd
from . import karlin_mcgregor as km
from . import sampler as sp
from . import stieltjes_wigert as sw
from .numerics import PrecisionContext, airy, det_dense, gauss_legendre

__all__ = ["CheckResult", "CHECKS", "run_all", "gram_residual"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def gram_residual(basis: sw.OrthoBasis, n_nodes: int = 240) -> float:
    """``max |<p_i, p_j> - delta_ij|`` by Gauss-Hermite in ``s`` with ``u = e^{2s/k}``."""
    k = basis.k
    s, w = np.polynomial.hermite.hermgauss(n_nodes)
    u = np.exp(2.0 * s / k)
    phi = sw.eval_phi_all(basis, u, basis.degree_max)
    p = phi / np.sqrt(sw.weight(u, k))
    gram = (p * (2.0 / k) * w) @ p.T
    return float(np.max(np.abs(gram - np.eye(len(gram)))))


def _quadrature():
    rule = gauss_legendre(20)
    err = max(abs(rule.integrate(lambda x, d=d: x**d) - (2.0 / (d + 1) if d % 2 == 0 else 0.0)) for d in range(40))
    return err < 1e-13, f"max monomial error {err:.2e}"


def _airy():
    x = np.linspace(-30, 30, 301)
    ai, aip = airy(x)
    ref_ai, ref_aip, _, _ = special.airy(x)
    err = max(np.max(np.abs(ai - ref_ai)), np.max(np.abs(aip - ref_aip)) / 10)
    return err < 1e-12, f"max deviation from scipy {err:.2e}"


def _closed_form_det():
    worst = 0.0
    ctx = PrecisionContext(256)
    for k in range(1, 7):
        x = km.Grid(k).points
        for t in (0.5, 1.0, 2.0):
            with ctx.workprec():
                m = mpmath.matrix([[mpmath.exp(-(mpmath.mpf(a) - b) ** 2 / (2 * t)) / mpmath.sqrt(2 * mpmath.pi * t)
                                    for b in x] for a in x])
                ref = float(mpmath.log(det_dense(m, ctx)))
            worst = max(worst, abs(km.lemma2_value(t, k).log_value - ref))
    return worst < 1e-10, f"max log deviation {worst:.2e}"


def _basis():
    basis = sw.build_basis(10)
    g = gram_residual(basis)
    d = eq.endpoints(10)
    rule = gauss_legendre(200, -3.0, 3.0)
    trace = rule.integrate(lambda t: sw.cd_kernel_diagonal(basis, np.exp(t)) * np.exp(t))
    ok = g < 1e-12 and abs(trace - 11) < 1e-8 and d.a < 1 < d.b
    return ok, f"gram {g:.2e}, CD trace - 11 = {trace - 11:.2e}"


def _equilibrium():
    errs = [abs(eq.psi_mass(k) / (k + 1) - 1) for k in (5, 20, 100)]
    ab = max(abs(eq.endpoints(k).sqrt_a * eq.endpoints(k).sqrt_b - math.exp(2 / k)) for k in (5, 20, 100))
    return max(errs) < 1e-8 and ab < 1e-13, f"mass {max(errs):.2e}, sqrt(ab) {ab:.2e}"


def _limit_laws():
    v0 = fd.f_tw(0.0)
    tr0 = -special.airy(0.0)[0] * special.airy(0.0)[1] / 3.0
    vals = [fd.f_tw(x).value for x in np.arange(-4, 2.01, 1.0)]
    s = fd.f_sine(0.01).value
    ok = (1 - tr0 <= v0.value <= math.exp(-tr0) and np.all(np.diff(vals) >= 0)
          and abs(s - (1 - 0.02 + 4 * math.pi**2 / 9 * 1e-8)) < 1e-9)
    return ok, f"F_TW(0) = {v0.value:.9f}, F_Sine(0.01) = {s:.10f}"


def _nystrom_spectrum():
    g = fd.nystrom_matrix(fd.airy_kernel_spec(), -3.0, 13.0, 80)
    ev = np.linalg.eigvalsh(0.5 * (g + g.T))
    return bool(ev.min() > -1e-10 and ev.max() < 1 + 1e-10), f"spectrum [{ev.min():.2e}, {ev.max():.6f}]"


def _finite_k():
    basis = sw.build_basis(10)
    e = fd.edge_probability(10, 10.0, basis).value
    b = fd.bulk_probability(10, 0.0, basis).value
    return e >= 1 - 1e-8 and b == 1.0, f"edge(10, xi=10) = {e:.12f}"


def _increments():
    rng = np.random.default_rng(0)
    worst = 0.0
    for law in sp.INCREMENT_LAWS:
        x = sp.draw_increments(rng, law, 10**6)
        worst = max(worst, abs(x.mean()), abs(x.var() - 1))
    return worst < 1e-2, f"max moment deviation {worst:.2e}"


def _determinism():
    cfg = sp.SimConfig(k=1, n_target=500, seed=11)
    a = sp.sample_bridges(cfg)
    b = sp.sample_bridges(cfg)
    ok = np.array_equal(a.configurations, b.configurations) and np.all(np.diff(a.configurations, axis=1) > 0)
    return bool(ok), f"{a.accepted} samples, rate {a.diagnostics['acceptance_rate']:.3f}"


CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
    ("gauss-legendre exactness", _quadrature),
    ("airy accuracy", _airy),
    ("grid determinant closed form", _closed_form_det),
    ("orthonormal basis k=10", _basis),
    ("equilibrium mass and endpoints", _equilibrium),
    ("limit laws", _limit_laws),
    ("nystrom spectrum", _nystrom_spectrum),
    ("finite-k limits", _finite_k),
    ("increment moments", _increments),
    ("seeded determinism", _determinism),
]


def run_all() -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results

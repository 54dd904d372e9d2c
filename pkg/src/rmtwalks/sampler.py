"""
Monte Carlo samplers for the mid-time configuration.

Three routes to the same law:

* ``sample_bridges``: independent Brownian bridges on ``[0, 2]`` pinned to
  the grid, kept when adjacent paths never cross.
* ``sample_walks``: random walks with a chosen increment law, kept when
  they stay ordered at every step and return within ``h`` of their start.
* ``mcmc_midtime``: random-scan Metropolis on the Coulomb-gas density.

Seeding.  The rejection samplers work in logical blocks of a fixed number
of attempts; block ``b`` draws from ``SeedSequence(seed, spawn_key=(b,))``.
MCMC runs a fixed number of chains, chain ``c`` on spawn key ``(c,)``.
Workers only decide which blocks or chains a process handles, and results
are merged by block or chain index, so output does not depend on the
number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, stats

from .errors import InfeasibleRejectionError, InvalidArgumentError, TuningFailureError
from .karlin_mcgregor import Grid
from .stieltjes_wigert import edge_threshold

__all__ = [
    "INCREMENT_LAWS",
    "SimConfig",
    "SampleBatch",
    "EventSpec",
    "draw_increments",
    "sample_bridges",
    "sample_walks",
    "mcmc_midtime",
    "estimate_event",
    "ks_distance",
    "semicircle_quantiles",
    "integrated_autocorr_time",
]

INCREMENT_LAWS = ("bernoulli", "gaussian", "uniform", "laplace")

BLOCK_ATTEMPTS = 8192
INFEASIBLE_ATTEMPTS = 10_000_000
INFEASIBLE_RATE = 1e-8
DEFAULT_CHAINS = 32
CHUNK_SWEEPS = 16
BRIDGE_CHUNK = 8
WALK_CHUNK = 16


@dataclass(frozen=True)
class SimConfig:
    k: int
    n_target: int
    seed: int
    n_steps: int = 64
    increment_law: str = "gaussian"
    h: float = 0.15
    N: int = 64

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidArgumentError("k must be an integer >= 1")
        if int(self.n_target) != self.n_target or self.n_target < 1:
            raise InvalidArgumentError("n_target must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        if self.n_steps < 2:
            raise InvalidArgumentError("n_steps must be >= 2")
        if self.increment_law not in INCREMENT_LAWS:
            raise InvalidArgumentError(f"increment_law must be one of {INCREMENT_LAWS}")
        if not self.h > 0:
            raise InvalidArgumentError("h must be positive")
        if self.N < 2:
            raise InvalidArgumentError("N must be >= 2")


@dataclass(frozen=True)
class SampleBatch:
    """Mid-time configurations, one sorted row per sample.

    ``chain_index`` labels the MCMC chain each row came from (rows of a
    chain are consecutive and in chain order); it is ``None`` for
    independent samples.
    """

    configurations: np.ndarray
    attempts: int
    accepted: int
    method: str
    diagnostics: dict = field(default_factory=dict)
    chain_index: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.accepted != len(self.configurations):
            raise ValueError("accepted must equal the number of configurations")

    @property
    def k(self) -> int:
        return self.configurations.shape[1] - 1


@dataclass(frozen=True)
class EventSpec:
    kind: str
    parameter: float

    def __post_init__(self):
        if self.kind not in ("edge", "bulk"):
            raise InvalidArgumentError("kind must be 'edge' or 'bulk'")
        if self.kind == "bulk" and self.parameter < 0:
            raise InvalidArgumentError("bulk parameter must be nonnegative")


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def draw_increments(rng: np.random.Generator, law: str, size) -> np.ndarray:
    """Mean-zero, unit-variance increments."""
    if law == "gaussian":
        return rng.standard_normal(size)
    if law == "bernoulli":
        return 2.0 * rng.integers(0, 2, size=size) - 1.0
    if law == "uniform":
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=size)
    if law == "laplace":
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size=size)
    raise InvalidArgumentError(f"unknown increment law {law!r}")


# --------------------------------------------------------------------------
# Rejection samplers
# --------------------------------------------------------------------------

def _bridge_block(cfg: SimConfig, block: int) -> tuple[np.ndarray, int]:
    rng = _rng(cfg.seed, block)
    k, m = cfg.k, cfg.n_steps
    dt = 2.0 / m
    x = Grid(k).points
    pos = np.broadcast_to(x, (BLOCK_ATTEMPTS, k + 1)).copy()
    mid = None
    for start in range(0, m, BRIDGE_CHUNK):
        steps = min(BRIDGE_CHUNK, m - start)
        z = rng.standard_normal((len(pos), k + 1, steps))
        path = np.empty((len(pos), k + 1, steps + 1))
        path[:, :, 0] = pos
        for j in range(steps):
            # step the bridge toward x; the final step lands on x exactly
            r = 2.0 - (start + j) * dt
            if start + j == m - 1:
                path[:, :, j + 1] = x
            else:
                cur = path[:, :, j]
                path[:, :, j + 1] = cur + (x - cur) * (dt / r) + math.sqrt(dt * (r - dt) / r) * z[:, :, j]
        gaps = np.diff(path, axis=1)
        ok = np.all(gaps[:, :, 1:] > 0, axis=(1, 2))
        # the gap of two independent unit Brownian motions has variance rate 2,
        # so a gap bridge from g1 to g2 over dt hits zero with prob exp(-g1 g2 / dt)
        g = gaps[ok]
        log_survive = np.log1p(-np.exp(-g[:, :, :-1] * g[:, :, 1:] / dt)).sum(axis=(1, 2))
        ok[ok] = np.log(rng.uniform(size=len(g))) < log_survive
        if start < m // 2 <= start + steps:
            mid = path[ok, :, m // 2 - start]
        elif mid is not None:
            mid = mid[ok]
        pos = path[ok, :, -1]
        if len(pos) == 0:
            return np.empty((0, k + 1)), BLOCK_ATTEMPTS
    return mid, BLOCK_ATTEMPTS


def _walk_block(cfg: SimConfig, block: int) -> tuple[np.ndarray, int]:
    rng = _rng(cfg.seed, block)
    k, n = cfg.k, cfg.N
    x = Grid(k).points
    scale = math.sqrt(2.0 / n)
    pos = np.broadcast_to(x, (BLOCK_ATTEMPTS, k + 1)).copy()
    alive = np.arange(BLOCK_ATTEMPTS)
    mid = None
    for start in range(0, n, WALK_CHUNK):
        steps = min(WALK_CHUNK, n - start)
        inc = draw_increments(rng, cfg.increment_law, (len(alive), k + 1, steps)) * scale
        path = pos[:, :, None] + np.cumsum(inc, axis=2)
        ok = np.all(np.diff(path, axis=1) > 0, axis=(1, 2))
        if start <= n // 2 - 1 < start + steps:
            mid_now = path[:, :, n // 2 - 1 - start]
            mid = mid_now[ok] if mid is None else mid[ok]
        elif mid is not None:
            mid = mid[ok]
        pos = path[ok, :, -1]
        alive = alive[ok]
        if len(alive) == 0:
            return np.empty((0, k + 1)), BLOCK_ATTEMPTS
    back = np.all(np.abs(pos - x) <= cfg.h, axis=1)
    return mid[back], BLOCK_ATTEMPTS


def _run_blocks(fn: Callable, cfg: SimConfig, workers: int, method: str) -> SampleBatch:
    if workers < 1:
        raise InvalidArgumentError("workers must be >= 1")
    found: list[np.ndarray] = []
    n_found = attempts = 0
    block = 0
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while n_found < cfg.n_target:
            ids = list(range(block, block + workers))
            if pool is None:
                results = [fn(cfg, b) for b in ids]
            else:
                results = list(pool.map(fn, [cfg] * len(ids), ids))
            for samples, tried in results:
                if n_found >= cfg.n_target:
                    break
                found.append(samples)
                n_found += len(samples)
                attempts += tried
            block += workers
            if attempts >= INFEASIBLE_ATTEMPTS and n_found < INFEASIBLE_RATE * attempts:
                raise InfeasibleRejectionError(
                    f"{method}: {n_found} accepted in {attempts} attempts; use mcmc_midtime instead"
                )
    finally:
        if pool is not None:
            pool.shutdown()
    configs = np.concatenate(found)[: cfg.n_target]
    # attempts are charged per whole block; the rate below is block-exact
    rate = n_found / attempts
    return SampleBatch(configs, attempts, len(configs), method, {"acceptance_rate": rate})


def sample_bridges(cfg: SimConfig, workers: int = 1) -> SampleBatch:
    """Nonintersecting bridges by rejection, with between-grid crossing correction.

    Paths are built step by step from the bridge transition law, in chunks
    of ``BRIDGE_CHUNK`` steps, so attempts that cross early are dropped
    before the rest of their path is drawn.

    For ``k = 1`` the correction is exact, so the sampler is exact.  For
    larger ``k`` adjacent pairs are corrected independently although they
    share a path, which leaves a small bias that shrinks with ``n_steps``.
    """
    if cfg.k > 4:
        raise InvalidArgumentError("bridge rejection is limited to k <= 4; use mcmc_midtime")
    if cfg.n_steps < 32 or cfg.n_steps % 2:
        raise InvalidArgumentError("n_steps must be even and >= 32")
    return _run_blocks(_bridge_block, cfg, workers, "bridge-rejection")


def sample_walks(cfg: SimConfig, workers: int = 1) -> SampleBatch:
    """Conditioned random walks; attempts are dropped at their first ordering violation."""
    if cfg.k > 2:
        raise InvalidArgumentError("walk rejection is limited to k <= 2")
    if cfg.N < 16 or cfg.N % 2:
        raise InvalidArgumentError("N must be even and >= 16")
    if cfg.h < 0.05:
        raise InvalidArgumentError("h must be >= 0.05")
    return _run_blocks(_walk_block, cfg, workers, "walk-rejection")


# --------------------------------------------------------------------------
# MCMC
# --------------------------------------------------------------------------

def semicircle_quantiles(n: int) -> np.ndarray:
    """Midpoint quantiles ``(j + 1/2)/n`` of the semicircle law on ``[-1, 1]``."""
    def cdf(q):
        return 0.5 + (q * math.sqrt(1.0 - q * q) + math.asin(q)) / math.pi

    return np.array([optimize.brentq(lambda q: cdf(q) - (j + 0.5) / n, -1.0, 1.0, xtol=1e-14) for j in range(n)])


def _pair_term(e: np.ndarray, ej: np.ndarray, j: np.ndarray) -> np.ndarray:
    """``sum_{i != j} 2 log|e_j - e_i|`` per chain."""
    d = np.abs(ej[:, None] - e)
    d[np.arange(len(j)), j] = 1.0
    return 2.0 * np.log(d).sum(axis=1)


class _Chains:
    """Vectorized random-scan Metropolis over independent chains."""

    def __init__(self, k: int, seeds: list, step: float):
        self.k = k
        self.rngs = seeds
        n = len(seeds)
        y0 = math.sqrt(2.0 * k) * semicircle_quantiles(k + 1)
        self.y = np.tile(y0, (n, 1))
        self.e = np.exp(2.0 * self.y / k)
        self.step = np.full(n, float(step))
        self.accepted = np.zeros(n)
        self.proposed = 0

    def _draws(self, n_updates: int):
        k1 = self.k + 1
        idx = np.empty((len(self.rngs), n_updates), dtype=np.int64)
        z = np.empty((len(self.rngs), n_updates))
        lu = np.empty((len(self.rngs), n_updates))
        for c, rng in enumerate(self.rngs):
            idx[c] = rng.integers(0, k1, n_updates)
            z[c] = rng.standard_normal(n_updates)
            lu[c] = np.log(rng.uniform(size=n_updates))
        return idx, z, lu

    def sweeps(self, n_sweeps: int, on_sweep: Callable | None = None):
        """Run up to ``n_sweeps`` sweeps of ``k + 1`` updates.

        Random numbers are drawn in chunks of ``CHUNK_SWEEPS`` sweeps whatever
        ``n_sweeps`` is, so a chain's trajectory depends only on its own
        stream.  ``on_sweep(done)`` may return True to stop early.
        """
        k1 = self.k + 1
        rows = np.arange(len(self.rngs))
        done = 0
        while done < n_sweeps:
            idx, z, lu = self._draws(CHUNK_SWEEPS * k1)
            for s in range(min(CHUNK_SWEEPS, n_sweeps - done)):
                for u in range(k1):
                    col = s * k1 + u
                    j = idx[:, col]
                    yj = self.y[rows, j]
                    prop = yj + self.step * z[:, col]
                    ep = np.exp(2.0 * prop / self.k)
                    delta = (_pair_term(self.e, ep, j) - _pair_term(self.e, self.e[rows, j], j)
                             - (prop * prop + 2.0 * prop) + (yj * yj + 2.0 * yj))
                    acc = lu[:, col] < delta
                    self.y[rows[acc], j[acc]] = prop[acc]
                    self.e[rows[acc], j[acc]] = ep[acc]
                    self.accepted += acc
                self.proposed += k1
                done += 1
                if on_sweep is not None and on_sweep(done):
                    return

    def reset_counts(self):
        self.accepted[:] = 0
        self.proposed = 0

    @property
    def rate(self) -> np.ndarray:
        return self.accepted / max(self.proposed, 1)


def integrated_autocorr_time(x: np.ndarray) -> float:
    """Integrated autocorrelation time with Geyer's initial positive sequence."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0 or n < 4:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = 1.0
    for m in range(0, n // 2 - 1):
        pair = acf[2 * m] + acf[2 * m + 1]
        if pair <= 0:
            break
        tau = 2.0 * sum(acf[: 2 * m + 2]) - 1.0
    return max(tau, 1.0)


def _run_chain_group(k: int, chain_ids: list, seed: int, step: float, burn_in: int,
                     pilot: int, quotas: list) -> tuple:
    rngs = [_rng(seed, c) for c in chain_ids]
    ch = _Chains(k, rngs, step)
    # tune on the first half of burn-in, then freeze
    tune_rounds = 10
    per_round = max(burn_in // (2 * tune_rounds), 1)
    for _ in range(tune_rounds):
        ch.reset_counts()
        ch.sweeps(per_round)
        r = ch.rate
        ch.step *= np.exp(np.clip(r - 0.35, -0.3, 0.3) * 2.5)
    ch.reset_counts()
    ch.sweeps(max(burn_in - tune_rounds * per_round, 1))
    burn_rate = ch.rate.copy()
    ch.reset_counts()
    trace = np.empty((len(chain_ids), pilot))

    def record_pilot(done):
        trace[:, done - 1] = ch.y.max(axis=1)

    ch.sweeps(pilot, record_pilot)
    taus = np.array([integrated_autocorr_time(t) for t in trace])
    # two autocorrelation times per retained state keeps the retained
    # sequence close to independent
    thin = np.maximum(np.ceil(2.0 * taus), 1).astype(int)
    out = [[] for _ in chain_ids]

    def record(done):
        for c in np.nonzero(done % thin == 0)[0]:
            if len(out[c]) < quotas[c]:
                out[c].append(np.sort(ch.y[c]))
        return all(len(o) >= q for o, q in zip(out, quotas))

    ch.reset_counts()
    ch.sweeps(int(thin.max()) * max(quotas), record)
    return out, ch.step.copy(), burn_rate, ch.rate.copy(), taus, thin, ch.proposed * len(chain_ids)


def mcmc_midtime(k: int, n_samples: int, burn_in: int = 2000, step: float = 0.3, seed: int = 0,
                 n_chains: int = DEFAULT_CHAINS, pilot: int = 400, workers: int = 1) -> SampleBatch:
    """Random-scan single-coordinate Metropolis on the Coulomb-gas density.

    Each chain starts at scaled semicircle quantiles, tunes its Gaussian
    step toward acceptance 0.35 during the first half of ``burn_in`` sweeps
    and then freezes it.  A pilot run estimates the integrated
    autocorrelation time of ``max y`` per chain and fixes that chain's
    thinning at twice that time.  The effective sample size of the retained
    states is reported in ``diagnostics["ess"]``.
    """
    if int(k) != k or not 1 <= k <= 200:
        raise InvalidArgumentError("k must be an integer in [1, 200]")
    if not step > 0:
        raise InvalidArgumentError("step must be positive")
    if n_samples < 1 or burn_in < 0 or n_chains < 1:
        raise InvalidArgumentError("n_samples, n_chains must be positive and burn_in nonnegative")
    if workers < 1:
        raise InvalidArgumentError("workers must be >= 1")
    k = int(k)
    n_chains = min(n_chains, n_samples)
    quotas = [n_samples // n_chains + (c < n_samples % n_chains) for c in range(n_chains)]
    groups = [list(g) for g in np.array_split(np.arange(n_chains), min(workers, n_chains))]
    args = [(k, g, seed, step, burn_in, pilot, [quotas[c] for c in g]) for g in groups]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chain_group, *zip(*args)))
    else:
        parts = [_run_chain_group(*a) for a in args]

    samples, labels = [], []
    steps, burn_rates, rates, taus, thins = [], [], [], [], []
    total = 0
    for g, (out, st, br, r, tau, th, proposed) in zip(groups, parts):
        total += proposed
        for c, rows in zip(g, out):
            samples.extend(rows)
            labels.extend([c] * len(rows))
        steps.append(st)
        burn_rates.append(br)
        rates.append(r)
        taus.append(tau)
        thins.append(th)
    rates = np.concatenate(rates)
    burn_rates = np.concatenate(burn_rates)
    configs = np.array(samples)
    chain_index = np.array(labels)
    diag = {
        "step_size": np.concatenate(steps).tolist(),
        "acceptance_ratio": float(rates.mean()),
        "burn_in_acceptance": float(burn_rates.mean()),
        "tau_pilot": np.concatenate(taus).tolist(),
        "thinning": np.concatenate(thins).tolist(),
        "n_chains": n_chains,
    }
    if np.any(rates < 0.1) or np.any(rates > 0.6):
        raise TuningFailureError("acceptance ratio outside [0.1, 0.6] after tuning", diag)
    diag["ess"] = _ess(configs.max(axis=1), chain_index)
    return SampleBatch(configs, total, len(configs), "mcmc", diag, chain_index)


def _ess(values: np.ndarray, chain_index: np.ndarray) -> float:
    ess = 0.0
    for c in np.unique(chain_index):
        v = values[chain_index == c]
        ess += len(v) / integrated_autocorr_time(v)
    return float(ess)


# --------------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------------

def event_indicator(configurations: np.ndarray, event: EventSpec, k: int) -> np.ndarray:
    y = np.asarray(configurations)
    if event.kind == "edge":
        return y.max(axis=1) <= edge_threshold(k, event.parameter)
    hw = math.pi * event.parameter / math.sqrt(2.0 * k)
    return ~np.any((y >= -hw) & (y <= hw), axis=1) if hw > 0 else np.ones(len(y), dtype=bool)


def _batch_means_se(x: np.ndarray, chain_index: np.ndarray, n_batches: int = 20) -> float:
    means = []
    for c in np.unique(chain_index):
        v = x[chain_index == c]
        for part in np.array_split(v, min(n_batches, len(v))):
            means.append(part.mean())
    means = np.array(means)
    if len(means) < 2:
        return math.nan
    return float(means.std(ddof=1) / math.sqrt(len(means)))


def estimate_event(batch: SampleBatch, event: EventSpec, k: int) -> tuple[float, float]:
    """Event frequency and its standard error (batch means for MCMC)."""
    if batch.accepted == 0:
        raise InvalidArgumentError("batch is empty")
    hit = event_indicator(batch.configurations, event, k).astype(float)
    p = float(hit.mean())
    if batch.chain_index is not None:
        return p, _batch_means_se(hit, batch.chain_index)
    return p, math.sqrt(p * (1.0 - p) / len(hit))


def ks_distance(samples, cdf: Callable) -> float:
    """Kolmogorov-Smirnov distance between the sample ECDF and ``cdf``."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise InvalidArgumentError("samples must be nonempty")
    return float(stats.kstest(samples, cdf).statistic)

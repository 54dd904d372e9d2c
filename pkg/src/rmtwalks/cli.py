"""Command-line interface: tables of limit laws, finite-k probabilities and samples."""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import pickle
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from functools import partial
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from . import equilibrium as eq
from . import fredholm as fd
from . import sampler as sp
from . import stieltjes_wigert as sw
from .errors import (
    DomainError,
    InfeasibleRejectionError,
    InsufficientPrecisionError,
    InvalidArgumentError,
    NotPositiveDefiniteError,
    TruncationFailureError,
    TuningFailureError,
)

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
CACHE_ENV = "RMTWALKS_CACHE_DIR"
GRID_SNAP = 1e-12


# --------------------------------------------------------------------------
# Formatting helpers
# --------------------------------------------------------------------------

def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` with both ends included, or a single number.

    Values within ``1e-12`` (relative to ``max(1, |stop|)``) of ``stop`` are
    snapped to it, and values within ``1e-12`` of zero to zero.
    """
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise InvalidArgumentError(f"bad grid {text!r}; expected start:stop:step") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3:
        raise InvalidArgumentError(f"bad grid {text!r}; expected start:stop:step")
    start, stop, step = nums
    if not all(math.isfinite(v) for v in nums):
        raise InvalidArgumentError("grid entries must be finite")
    if start == stop:
        return [start]
    if step == 0 or (stop - start) / step < 0:
        raise InvalidArgumentError(f"step {step} does not lead from {start} to {stop}")
    tol = GRID_SNAP * max(1.0, abs(stop))
    n = int(math.floor((stop - start) / step + GRID_SNAP)) + 1
    out = []
    for i in range(n):
        v = start + i * step
        if abs(v - stop) <= tol:
            v = stop
        elif abs(v) <= GRID_SNAP:
            v = 0.0
        out.append(v)
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int | None = None
    outputs: list = field(default_factory=list)
    timestamp: str = ""
    version: str = __version__
    diagnostics: dict = field(default_factory=dict)


def _timestamp() -> str:
    # honour SOURCE_DATE_EPOCH so manifests can be made byte-reproducible too
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _emit(args, text: str, parameters: dict, seed=None, diagnostics=None) -> None:
    """Write ``text`` to ``--out`` (with a manifest next to it) or to stdout."""
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    man = RunManifest(args.command, parameters, seed, [str(out)], _timestamp(), __version__, diagnostics or {})
    with open(manifest_path(out), "w", newline="\n", encoding="utf-8") as fh:
        json.dump(asdict(man), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _map(fn: Callable, items: list, workers: int) -> list:
    """Order-preserving map, optionally over processes."""
    if workers <= 1 or len(items) <= 1:
        return [fn(v) for v in items]
    with ProcessPoolExecutor(min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Basis cache
# --------------------------------------------------------------------------

def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or os.path.join(os.path.expanduser("~"), ".cache")
    return Path(base) / "rmtwalks"


def load_basis(k: int, cache_dir: Path | None) -> sw.OrthoBasis:
    """Build the degree ``k + 1`` basis, reusing a pickled copy keyed by (k, degree, bits)."""
    degree = k + 1
    bits = max(256, sw.required_precision(k, degree))
    if cache_dir is None:
        return sw.build_basis(k, degree)
    path = Path(cache_dir) / f"basis_k{k}_d{degree}_p{bits}.pkl"
    if path.exists():
        try:
            with open(path, "rb") as fh:
                basis = pickle.load(fh)
            if (basis.k, basis.degree_max, basis.precision_bits) == (k, degree, bits):
                return basis
        except (OSError, pickle.UnpicklingError, EOFError, AttributeError):
            pass
    basis = sw.build_basis(k, degree)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.tmp")
        with open(tmp, "wb") as fh:
            pickle.dump(basis, fh)
        os.replace(tmp, path)
    except OSError:
        pass  # caching is an optimisation only
    return basis


def _cache_dir(args) -> Path | None:
    if args.no_cache:
        return None
    return Path(args.cache_dir) if args.cache_dir else default_cache_dir()


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

DET_HEADER = ["param", "value", "node_doubling_error", "truncation_error"]


def _det_row(fn, order, x):
    r = fn(x, order)
    return (x, r.value, r.node_doubling_error, r.truncation_error)


def cmd_tw(args) -> int:
    grid = parse_grid(args.xi)
    rows = _map(partial(_det_row, fd.f_tw, args.order), grid, args.workers)
    _emit(args, csv_text(DET_HEADER, rows), {"xi": args.xi, "order": args.order})
    return EXIT_OK


def cmd_sine(args) -> int:
    grid = parse_grid(args.eta)
    rows = _map(partial(_det_row, fd.f_sine, args.order), grid, args.workers)
    _emit(args, csv_text(DET_HEADER, rows), {"eta": args.eta, "order": args.order})
    return EXIT_OK


def _finite_row(k, event, order, window, compare, basis, x):
    if event == "edge":
        r = fd.edge_probability(k, x, basis, order)
    else:
        r = fd.bulk_probability(k, x, basis, order, window=window)
    row = [k, event, x, r.value, r.node_doubling_error, r.truncation_error]
    if compare:
        lim = (fd.f_tw(x, order) if event == "edge" else fd.f_sine(x, order)).value
        row += [lim, r.value - lim]
    return tuple(row)


def cmd_finite(args) -> int:
    k = args.k
    if not 1 <= k <= 200:
        raise InvalidArgumentError("k must lie in [1, 200]")
    grid = parse_grid(args.param)
    basis = load_basis(k, _cache_dir(args))
    fn = partial(_finite_row, k, args.event, args.order, args.window, args.compare, basis)
    rows = _map(fn, grid, args.workers)
    header = ["k", "event", "param", "value", "node_doubling_error", "truncation_error"]
    if args.compare:
        header += ["limit", "difference"]
    params = {"k": k, "event": args.event, "param": args.param, "order": args.order,
              "compare": args.compare, "window": args.window, "precision_bits": basis.precision_bits}
    _emit(args, csv_text(header, rows), params)
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    rows = []
    for k in (int(v) for v in parse_grid(args.k)):
        d = eq.endpoints(k)
        mass = eq.psi_mass(k) / (k + 1) - 1.0
        s = math.sqrt(2.0 / k)
        rows.append((k, d.a, d.b, d.B_k, mass,
                     d.sqrt_a - (1 - s + 2.0 / k), d.sqrt_b - (1 + s + 2.0 / k)))
    header = ["k", "a", "b", "B_k", "mass_residual", "residual_sqrt_a", "residual_sqrt_b"]
    _emit(args, csv_text(header, rows), {"k": args.k})
    return EXIT_OK


def run_id(parameters: dict) -> str:
    blob = json.dumps(parameters, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def cmd_sample(args) -> int:
    params = {"mode": args.mode, "k": args.k, "n": args.n, "seed": args.seed}
    if args.mode == "bridge":
        cfg = sp.SimConfig(k=args.k, n_target=args.n, seed=args.seed, n_steps=args.steps)
        params["steps"] = args.steps
        batch = sp.sample_bridges(cfg, workers=args.workers)
    elif args.mode == "walk":
        cfg = sp.SimConfig(k=args.k, n_target=args.n, seed=args.seed, increment_law=args.increments,
                           h=args.h, N=args.steps)
        params.update(steps=args.steps, h=args.h, increments=args.increments)
        batch = sp.sample_walks(cfg, workers=args.workers)
    else:
        params.update(burn_in=args.burn_in, chains=args.chains, step=args.step)
        batch = sp.mcmc_midtime(args.k, args.n, burn_in=args.burn_in, step=args.step, seed=args.seed,
                                n_chains=args.chains, workers=args.workers)
    rid = run_id(params)
    conf = batch.configurations
    k1 = conf.shape[1]
    buf = io.StringIO()
    buf.write("run_id,method,k,sample_index,particle_index,position\n")
    prefix = f"{rid},{batch.method},{args.k},"
    for i, row in enumerate(conf):
        for j in range(k1):
            buf.write(f"{prefix}{i},{j},{'%.17g' % row[j]}\n")
    diag = {"attempts": batch.attempts, "accepted": batch.accepted, **_jsonable(batch.diagnostics)}
    _emit(args, buf.getvalue(), params, seed=args.seed, diagnostics=diag)
    return EXIT_OK


def _jsonable(d: dict) -> dict:
    out = {}
    for key, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, np.generic):
            v = v.item()
        out[key] = v
    return out


def cmd_basis(args) -> int:
    basis = load_basis(args.k, _cache_dir(args))
    _emit(args, sw.export_table(basis, args.digits), {"k": args.k, "digits": args.digits})
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:34s} {r.seconds:6.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed invariants: " + ", ".join(failed))
        return EXIT_FAILED
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmtwalks", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_, order=True):
        sp_.add_argument("--out", help="output file (default: stdout, no manifest)")
        sp_.add_argument("--workers", type=_positive_int, default=1)
        if order:
            sp_.add_argument("--order", type=_positive_int, default=fd.DEFAULT_ORDER)

    def cache(sp_):
        sp_.add_argument("--cache-dir", help=f"basis cache directory (default: ${CACHE_ENV} or ~/.cache/rmtwalks)")
        sp_.add_argument("--no-cache", action="store_true", help="always rebuild the basis")

    s = sub.add_parser("tw", help="Tracy-Widom distribution on a grid")
    s.add_argument("--xi", required=True, help="start:stop:step")
    common(s)
    s.set_defaults(func=cmd_tw)

    s = sub.add_parser("sine", help="sine-kernel gap probability on a grid")
    s.add_argument("--eta", required=True, help="start:stop:step")
    common(s)
    s.set_defaults(func=cmd_sine)

    s = sub.add_parser("finite", help="exact finite-k edge or bulk probabilities")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--event", choices=("edge", "bulk"), required=True)
    s.add_argument("--param", required=True, help="xi (edge) or eta (bulk) grid, start:stop:step")
    s.add_argument("--compare", action="store_true", help="append the limit law and the difference")
    s.add_argument("--window", choices=("theorem", "proof"), default="theorem",
                   help="bulk half-width pi*eta/sqrt(2k) (theorem) or eta/sqrt(k+1) (proof)")
    common(s)
    cache(s)
    s.set_defaults(func=cmd_finite)

    s = sub.add_parser("equilibrium", help="equilibrium-measure diagnostics")
    s.add_argument("--k", required=True, help="k or a k grid")
    common(s, order=False)
    s.set_defaults(func=cmd_equilibrium)

    s = sub.add_parser("sample", help="mid-time samples (long-format CSV)")
    s.add_argument("--mode", choices=("bridge", "walk", "mcmc"), required=True)
    s.add_argument("--k", type=_positive_int, required=True)
    s.add_argument("--n", type=_positive_int, required=True, help="number of samples")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--steps", type=_positive_int, default=64, help="bridge grid steps or walk length N")
    s.add_argument("--h", type=float, default=0.15, help="walk return half-width")
    s.add_argument("--increments", choices=sp.INCREMENT_LAWS, default="gaussian")
    s.add_argument("--burn-in", type=int, default=2000, help="MCMC burn-in sweeps")
    s.add_argument("--chains", type=_positive_int, default=sp.DEFAULT_CHAINS)
    s.add_argument("--step", type=float, default=0.3, help="initial MCMC proposal scale")
    common(s, order=False)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("basis", help="export recurrence coefficients")
    s.add_argument("--k", type=_positive_int, required=True)
    s.add_argument("--digits", type=_positive_int, default=30)
    common(s, order=False)
    cache(s)
    s.set_defaults(func=cmd_basis)

    s = sub.add_parser("selftest", help="run the invariant suite")
    s.set_defaults(func=cmd_selftest)
    return p


GRID_FLAGS = ("--xi", "--eta", "--param", "--k")
_GRID_TOKEN = re.compile(r"^-[0-9.][0-9.eE+\-:]*$")


def _join_negative_grids(argv: Sequence[str]) -> list[str]:
    """Let ``--xi -4:2:0.5`` through; argparse would read ``-4:2:0.5`` as a flag."""
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok in GRID_FLAGS:
            nxt = next(it, None)
            if nxt is not None and _GRID_TOKEN.match(nxt):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
        else:
            out.append(tok)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_negative_grids(sys.argv[1:] if argv is None else argv))
    try:
        return args.func(args)
    except (InvalidArgumentError, DomainError) as exc:
        print(f"rmtwalks {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InsufficientPrecisionError as exc:
        print(f"rmtwalks {args.command}: {exc}; rerun with at least {exc.required_bits} bits "
              "or clear the basis cache", file=sys.stderr)
        return EXIT_NUMERIC
    except NotPositiveDefiniteError as exc:
        print(f"rmtwalks {args.command}: Hankel factorization failed at pivot {exc.pivot_index}; "
              "precision too low for this k, clear the basis cache and retry", file=sys.stderr)
        return EXIT_NUMERIC
    except (TruncationFailureError, TuningFailureError, InfeasibleRejectionError) as exc:
        print(f"rmtwalks {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

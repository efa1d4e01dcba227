"""``mkv`` command line: simulate, estimate, select, experiment.

Exit status is 0 on success, 2 on usage errors and 1 on runtime failures
(non-finite particles, compute-budget refusal, I/O errors).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .gl import DEFAULT_OMEGA, adaptive_estimate, bandwidth_grid, fixed_bandwidth, select_bandwidths
from .harness import DEFAULT_BUDGET, EXPERIMENTS, BudgetExceeded, parse_grid, run_experiment
from .io import read_ensemble, write_density, write_ensemble, write_json
from .kde import estimate_density
from .kernels import SUPPORTED_ORDERS, make_kernel
from .models import MODEL_IDS, get_model
from .particles import NonFiniteError, SimConfig, resolve_threads, simulate


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def _order(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        v = None
    if v not in SUPPORTED_ORDERS:
        raise argparse.ArgumentTypeError(f"kernel order must be one of {SUPPORTED_ORDERS}")
    return v


def _orders(text: str) -> list[int]:
    return [_order(t) for t in text.split(",") if t]


def _bandwidth(text: str):
    if text in ("auto", "smooth"):
        return text
    try:
        return _positive_float(text)
    except argparse.ArgumentTypeError:
        raise argparse.ArgumentTypeError(
            f"bandwidth must be 'auto', 'smooth' or a positive number, got {text!r}") from None


def _grid(text: str) -> np.ndarray:
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mkv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def threads_arg(sp):
        sp.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $MKV_THREADS or 1); never changes results")

    s = sub.add_parser("simulate", help="run the particle system and write the final ensemble")
    s.add_argument("--model", required=True, choices=MODEL_IDS)
    s.add_argument("--n", type=_positive_int, required=True, help="number of particles N")
    s.add_argument("--steps", type=_positive_int, default=100, help="number of Euler steps M")
    s.add_argument("--t", type=_positive_float, default=1.0, help="horizon T")
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--out", required=True, type=Path)
    threads_arg(s)

    e = sub.add_parser("estimate", help="kernel density estimate from a particle file")
    e.add_argument("--particles", required=True, type=Path)
    e.add_argument("--order", type=_order, default=5)
    e.add_argument("--bandwidth", type=_bandwidth, default="auto",
                   help="'auto' (data-driven), 'smooth' (rate rule) or a fixed value")
    e.add_argument("--omega", type=_positive_float, default=None, help=f"penalty for 'auto' (default {DEFAULT_OMEGA:g})")
    e.add_argument("--smoothness", type=_positive_int, default=None,
                   help="smoothness proxy for 'smooth' (default order+1)")
    e.add_argument("--grid", type=_grid, action="append", required=True,
                   help="query grid start:stop:count; repeat once per dimension")
    e.add_argument("--out", required=True, type=Path)
    threads_arg(e)

    c = sub.add_parser("select", help="write the bandwidth selection trace at query points")
    c.add_argument("--particles", required=True, type=Path)
    c.add_argument("--order", type=_order, default=5)
    c.add_argument("--omega", type=_positive_float, default=DEFAULT_OMEGA)
    c.add_argument("--grid", type=_grid, action="append", help="query grid start:stop:count per dimension")
    c.add_argument("--x", type=float, action="append", help="single 1-d query point (repeatable)")
    c.add_argument("--out", required=True, type=Path)
    threads_arg(c)

    x = sub.add_parser("experiment", help="run a packaged experiment protocol")
    x.add_argument("experiment", choices=sorted(EXPERIMENTS))
    x.add_argument("--reps", type=_positive_int, default=None, help="replicates")
    x.add_argument("--nmin", type=_positive_int, default=None, help="smallest log2 N")
    x.add_argument("--nmax", type=_positive_int, default=None, help="largest log2 N")
    x.add_argument("--orders", type=_orders, default=None, help="comma-separated kernel orders")
    x.add_argument("--steps", type=_positive_int, default=None)
    x.add_argument("--seed", type=_seed, default=0)
    x.add_argument("--budget", default=str(DEFAULT_BUDGET),
                   help="max estimated drift interactions, or 'none' to lift the guard")
    x.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                   help="override any protocol parameter, e.g. --set omega=10")
    x.add_argument("--out", required=True, type=Path)
    threads_arg(x)
    return p


def _queries(grids: list[np.ndarray]) -> np.ndarray:
    if len(grids) == 1:
        return grids[0][:, np.newaxis]
    mesh = np.meshgrid(*grids, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _check_dims(ens, grids, order):
    if len(grids) != ens.dim:
        raise UsageError(f"particles are {ens.dim}-dimensional but {len(grids)} --grid given")


def cmd_simulate(args) -> int:
    model = get_model(args.model)
    cfg = SimConfig(n_particles=args.n, n_steps=args.steps, horizon=args.t, seed=args.seed)
    ens = simulate(cfg, model, threads=args.threads)
    write_ensemble(args.out, ens)
    return 0


def cmd_estimate(args) -> int:
    if args.omega is not None and args.bandwidth != "auto":
        raise UsageError("--omega only applies with --bandwidth auto")
    if args.smoothness is not None and args.bandwidth != "smooth":
        raise UsageError("--smoothness only applies with --bandwidth smooth")
    ens = read_ensemble(args.particles)
    _check_dims(ens, args.grid, args.order)
    k = make_kernel(args.order, ens.dim)
    q = _queries(args.grid)
    if args.bandwidth == "auto":
        if ens.n < 3:
            raise UsageError("data-driven bandwidth needs at least 3 particles")
        omega = DEFAULT_OMEGA if args.omega is None else args.omega
        est = adaptive_estimate(ens, k, bandwidth_grid(ens.n, args.order, ens.dim), omega, q, args.threads)
    else:
        if args.bandwidth == "smooth":
            eta = fixed_bandwidth(ens.n, args.smoothness or args.order + 1, ens.dim)
        else:
            eta = args.bandwidth
        est = estimate_density(ens, k, eta, q, threads=args.threads)
    write_density(args.out, est)
    return 0


def cmd_select(args) -> int:
    if bool(args.grid) == bool(args.x):
        raise UsageError("give query points with either --grid or --x")
    ens = read_ensemble(args.particles)
    if args.x:
        if ens.dim != 1:
            raise UsageError("--x is only valid for 1-d particles")
        q = np.asarray(args.x, dtype=float)[:, np.newaxis]
    else:
        _check_dims(ens, args.grid, args.order)
        q = _queries(args.grid)
    if ens.n < 3:
        raise UsageError("bandwidth selection needs at least 3 particles")
    k = make_kernel(args.order, ens.dim)
    grid = bandwidth_grid(ens.n, args.order, ens.dim)
    sels = select_bandwidths(ens, k, grid, args.omega, q, args.threads)
    write_json(args.out, {
        "N": ens.n,
        "order": args.order,
        "omega": args.omega,
        "grid": list(grid.values),
        "points": [s.to_dict() for s in sels],
    })
    return 0


def cmd_experiment(args) -> int:
    defaults = EXPERIMENTS[args.experiment]
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=JSON, got {item!r}")
        if key not in defaults:
            raise UsageError(f"unknown parameter {key!r} for {args.experiment}")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key] = value
    if args.reps is not None:
        overrides["replicates"] = args.reps
    if args.orders is not None:
        overrides["orders"] = args.orders
    if args.steps is not None:
        overrides["n_steps"] = args.steps
    if args.nmin is not None or args.nmax is not None:
        exps = [int(round(math.log2(n))) for n in defaults["n_values"]]
        lo = exps[0] if args.nmin is None else args.nmin
        hi = exps[-1] if args.nmax is None else args.nmax
        if lo > hi:
            raise UsageError(f"--nmin {lo} exceeds --nmax {hi}")
        overrides["n_values"] = [2**e for e in range(lo, hi + 1)]
    if args.budget.lower() == "none":
        budget = None
    else:
        try:
            budget = float(args.budget)
        except ValueError:
            raise UsageError(f"--budget must be a number or 'none', got {args.budget!r}") from None
    run_experiment(args.experiment, overrides, seed=args.seed, out=args.out,
                   threads=args.threads, budget=budget)
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "select": cmd_select,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        resolve_threads(args.threads)
    except ValueError as exc:
        print(f"mkv: error: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mkv {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (NonFiniteError, BudgetExceeded, OSError, ValueError) as exc:
        print(f"mkv {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

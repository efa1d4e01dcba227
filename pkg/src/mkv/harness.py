"""Monte-Carlo experiment drivers.

Three protocols are wired in with their published defaults:

``ou-rate``
    Strong error of fixed-bandwidth estimates against the stationary
    N(3, 1/2) law, and least-squares rates ``E_N ~ N^-alpha`` per order.
``double-layer-bandwidth``
    Histograms of data-driven bandwidths for the Morse interaction model,
    optionally perturbed by a Lipschitz common force.
``burgers-recon``
    Adaptive reconstruction of the Burgers density against its closed form.

Each replicate is simulated once and reused for every kernel order and
penalty, so comparisons across orders are paired.  Replicates run on a
thread pool; results are reduced in replicate order, so output does not
depend on the number of threads.
"""

from __future__ import annotations

import csv
import json
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .gl import DEFAULT_OMEGA, BandwidthGrid, bandwidth_grid, fixed_bandwidth, select_from_estimates, variance_term
from .io import fmt
from .kde import as_points, kde_values
from .kernels import KernelSpec, make_kernel
from .models import ModelSpec, burgers_model, double_layer_model, linear_interaction_model
from .particles import ParticleEnsemble, SimConfig, resolve_threads, simulate
from .rng import derive_seed

__all__ = [
    "DEFAULT_BUDGET",
    "EXPERIMENTS",
    "BudgetExceeded",
    "ExperimentResult",
    "SlopeFit",
    "bandwidth_histogram",
    "estimate_cost",
    "fit_slope",
    "mc_strong_error",
    "parse_grid",
    "replicate_seed",
    "run_experiment",
    "strong_error",
    "tally",
]

# Elementary drift interactions allowed per experiment before refusing.
DEFAULT_BUDGET = 1e11


class BudgetExceeded(RuntimeError):
    def __init__(self, cost: float, budget: float):
        self.cost = cost
        self.budget = budget
        super().__init__(
            f"estimated cost {cost:.3g} drift interactions exceeds the budget {budget:.3g}; "
            "reduce N, steps or replicates, or raise the budget"
        )


def parse_grid(spec) -> np.ndarray:
    """``"a:b:n"`` or ``(a, b, n)`` -> ``n`` uniform points on ``[a, b]``."""
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid spec must be 'start:stop:count', got {spec!r}")
        try:
            a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ValueError(f"malformed grid spec {spec!r}") from None
    else:
        a, b, n = spec
        a, b, n = float(a), float(b), int(n)
    if n < 1 or not (math.isfinite(a) and math.isfinite(b)) or (n > 1 and not b > a):
        raise ValueError(f"invalid grid [{a}, {b}] with {n} points")
    return np.linspace(a, b, n)


def replicate_seed(master: int, j: int) -> int:
    """Seed of replicate ``j``; shared by every system size."""
    return derive_seed(master, j)


def estimate_cost(model: ModelSpec, n_values: Sequence[int], n_steps: int, replicates: int) -> float:
    per_n = (lambda n: n) if model.has_reduced_form else (lambda n: n * n)
    return float(sum(per_n(n) for n in n_values)) * n_steps * replicates


def check_budget(cost: float, budget: float | None) -> None:
    if budget is not None and cost > budget:
        raise BudgetExceeded(cost, budget)


# -- statistics -----------------------------------------------------------------------


def strong_error(estimates, reference) -> float:
    """Mean over replicates of the squared sup-norm error.

    ``estimates`` is ``(R, G)``, ``reference`` is ``(G,)``.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    ref = np.asarray(reference, dtype=float)
    sup2 = np.max(np.abs(est - ref) ** 2, axis=1)
    return float(np.mean(sup2))


@dataclass(frozen=True)
class SlopeFit:
    alpha: float
    intercept: float
    residual: float


def fit_slope(points) -> SlopeFit:
    """Least-squares fit ``log2 E = -alpha log2 N + c``.

    ``points`` are ``(log2 N, log2 E)`` pairs.  ``residual`` is the root
    mean square of the fit residuals.

    >>> fit_slope([(7, -7), (8, -8)]).alpha
    1.0
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (x, y) pairs")
    if np.unique(pts[:, 0]).size < 2:
        raise ValueError("slope fit needs at least two distinct abscissae")
    x, y = pts[:, 0], pts[:, 1]
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    return SlopeFit(alpha=-slope + 0.0, intercept=intercept, residual=float(np.sqrt(np.mean(resid**2))))


def tally(selected, grid: BandwidthGrid) -> list[dict]:
    """Count selections per grid value, largest bandwidth first."""
    etas = grid.as_array()
    sel = np.asarray(selected, dtype=float).ravel()
    counts = [int(np.count_nonzero(sel == e)) for e in etas]
    if sum(counts) != sel.size:
        raise ValueError("selected bandwidths outside the grid")
    ms = grid.m if grid.m else (None,) * len(etas)
    return [{"eta": float(e), "m": m, "count": c} for e, m, c in zip(etas, ms, counts)]


# -- experiment pieces ----------------------------------------------------------------


def _map_replicates(fn: Callable[[int], object], replicates: int, threads: int) -> list:
    if threads > 1 and replicates > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, range(replicates)))
    return [fn(j) for j in range(replicates)]


def _simulate_replicate(model, n, n_steps, horizon, master, j) -> ParticleEnsemble:
    cfg = SimConfig(n_particles=n, n_steps=n_steps, horizon=horizon, seed=replicate_seed(master, j))
    return simulate(cfg, model, threads=1)


def mc_strong_error(model: ModelSpec, n_values: Sequence[int], orders: Sequence[int], *,
                    eval_grid, replicates: int, horizon: float = 1.0, n_steps: int = 100,
                    bandwidth: str | Callable[[int, KernelSpec], float] = "smooth",
                    omega: float = DEFAULT_OMEGA, seed: int = 0,
                    threads: int | None = 1) -> list[dict]:
    """Monte-Carlo strong error ``E_N`` for every ``(N, order)``.

    ``bandwidth`` is ``"smooth"`` (``N^(-1/(2(order+1)+d))``), ``"auto"``
    (data-driven selection with penalty ``omega``) or a callable
    ``(N, kernel) -> eta``.
    """
    if not model.has_reference:
        raise ValueError(f"model {model.name!r} has no reference solution")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    queries = as_points(eval_grid, model.dim)
    if queries.shape[0] == 0:
        raise ValueError("evaluation grid is empty")
    ref = model.reference_density(horizon, queries[:, 0] if model.dim == 1 else queries)
    kernels = [make_kernel(o, model.dim) for o in orders]
    threads = resolve_threads(threads)
    rows = []
    for n in n_values:
        def one(j: int, n=n) -> list[float]:
            ens = _simulate_replicate(model, n, n_steps, horizon, seed, j)
            return [
                float(np.max((_estimate(ens, k, n, bandwidth, omega, queries) - ref) ** 2))
                for k in kernels
            ]

        sup2 = np.array(_map_replicates(one, replicates, threads))
        for i, k in enumerate(kernels):
            row = {"N": int(n), "order": k.order, "E_N": float(np.mean(sup2[:, i])), "replicates": replicates}
            if bandwidth == "smooth":
                row["eta"] = fixed_bandwidth(n, k.order + 1, k.dim)
            rows.append(row)
    return rows


def _estimate(ens, k, n, bandwidth, omega, queries) -> np.ndarray:
    if bandwidth == "auto":
        grid = bandwidth_grid(n, k.order, k.dim)
        etas = grid.as_array()
        est = kde_values(ens.positions, k, etas, queries)
        index, _ = select_from_estimates(est, variance_term(etas, n, k, omega))
        return est[index, np.arange(queries.shape[0])]
    if bandwidth == "smooth":
        eta = fixed_bandwidth(n, k.order + 1, k.dim)
    elif callable(bandwidth):
        eta = float(bandwidth(n, k))
    else:
        raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
    return kde_values(ens.positions, k, np.array([eta]), queries)[0]


def bandwidth_histogram(model: ModelSpec, n: int, orders: Sequence[int], omegas: Sequence[float],
                        query_grid, replicates: int, *, horizon: float = 1.0, n_steps: int = 100,
                        seed: int = 0, grid: BandwidthGrid | None = None,
                        threads: int | None = 1) -> list[dict]:
    """Distribution of selected bandwidths over replicates and query points.

    Returns one histogram per ``(order, omega)``; counts sum to
    ``replicates * len(query_grid)``.  ``grid`` overrides the default
    ``bandwidth_grid(n, order)`` for every order.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    queries = as_points(query_grid, model.dim)
    kernels = [make_kernel(o, model.dim) for o in orders]
    grids = [grid if grid is not None else bandwidth_grid(n, k.order, k.dim) for k in kernels]

    def one(j: int) -> list[list[np.ndarray]]:
        ens = _simulate_replicate(model, n, n_steps, horizon, seed, j)
        out = []
        for k, g in zip(kernels, grids):
            etas = g.as_array()
            est = kde_values(ens.positions, k, etas, queries)
            out.append([etas[select_from_estimates(est, variance_term(etas, n, k, w))[0]] for w in omegas])
        return out

    per_rep = _map_replicates(one, replicates, resolve_threads(threads))
    hists = []
    for i, (k, g) in enumerate(zip(kernels, grids)):
        for w_i, w in enumerate(omegas):
            sel = np.concatenate([rep[i][w_i] for rep in per_rep])
            hists.append({"N": int(n), "order": k.order, "omega": float(w), "counts": tally(sel, g)})
    return hists


def _burgers_runs(model, n_values, orders, queries, replicates, horizon, n_steps, omega, seed, threads):
    ref = model.reference_density(horizon, queries[:, 0])
    kernels = [make_kernel(o, 1) for o in orders]
    rows, hists, curves = [], [], []
    for n in n_values:
        grids = [bandwidth_grid(n, k.order, 1) for k in kernels]

        def one(j: int, n=n, grids=grids):
            ens = _simulate_replicate(model, n, n_steps, horizon, seed, j)
            res = []
            for k, g in zip(kernels, grids):
                etas = g.as_array()
                est = kde_values(ens.positions, k, etas, queries)
                idx, _ = select_from_estimates(est, variance_term(etas, n, k, omega))
                res.append((est[idx, np.arange(queries.shape[0])], etas[idx]))
            return res

        per_rep = _map_replicates(one, replicates, threads)
        for i, (k, g) in enumerate(zip(kernels, grids)):
            sups = [float(np.max(np.abs(rep[i][0] - ref))) for rep in per_rep]
            rows.append({
                "N": int(n), "order": k.order,
                "E_N": float(np.mean(np.square(sups))),
                "median_sup_error": float(np.median(sups)),
                "sup_errors": sups,
                "replicates": replicates,
            })
            sel = np.concatenate([rep[i][1] for rep in per_rep])
            hists.append({"N": int(n), "order": k.order, "omega": float(omega), "counts": tally(sel, g)})
            curves.append({"N": int(n), "order": k.order, "estimate": per_rep[0][i][0].tolist(),
                           "bandwidth": per_rep[0][i][1].tolist()})
    return rows, hists, {"x": queries[:, 0].tolist(), "reference": ref.tolist(), "series": curves}


# -- orchestration --------------------------------------------------------------------


EXPERIMENTS: dict[str, dict] = {
    "ou-rate": {
        "horizon": 1.0,
        "n_steps": 100,
        "n_values": [2**k for k in range(7, 16)],
        "replicates": 30,
        "orders": [1, 3, 5, 7, 9],
        "grid": [0.0, 6.0, 1000],
        "bandwidth": "smooth",
        "omega": DEFAULT_OMEGA,
    },
    "double-layer-bandwidth": {
        "horizon": 1.0,
        "n_steps": 100,
        "n_values": [2**k for k in range(5, 17)],
        "replicates": 1,
        "orders": [3, 5],
        "omegas": [0.05, 0.1, 1.0, 10.0, 20.0],
        "grid": [-4.0, 4.0, 100],
        "perturbed": False,
    },
    "burgers-recon": {
        "horizon": 1.0,
        "n_steps": 100,
        "sigma": math.sqrt(0.2),
        "n_values": [2**10, 2**15],
        "replicates": 1,
        "orders": [1, 3, 5, 7, 9],
        "grid": [-3.0, 4.0, 1001],
        "omega": DEFAULT_OMEGA,
    },
}


@dataclass
class ExperimentResult:
    experiment: str
    params: dict
    tables: list[dict] = field(default_factory=list)
    slopes: list[dict] = field(default_factory=list)
    histograms: list[dict] = field(default_factory=list)
    seeds: list[dict] = field(default_factory=list)
    wallclock_s: float = 0.0
    curves: dict | None = None

    def to_dict(self, wallclock: bool = True) -> dict:
        d = asdict(self)
        if self.curves is None:
            d.pop("curves")
        if not wallclock:
            d.pop("wallclock_s")
        return d

    def to_json(self, wallclock: bool = True) -> str:
        return json.dumps(self.to_dict(wallclock), indent=2) + "\n"

    def write(self, path) -> list[Path]:
        """Write the JSON result and CSV companions beside it."""
        path = Path(path)
        path.write_text(self.to_json())
        written = [path]
        stem = path.with_suffix("")
        if self.tables:
            cols = ["N", "order", "E_N"] + [c for c in ("eta", "median_sup_error", "replicates")
                                            if c in self.tables[0]]
            written.append(_write_csv(f"{stem}_errors.csv", cols, ([r[c] for c in cols] for r in self.tables)))
        if self.slopes:
            cols = ["order", "alpha", "intercept", "residual"]
            written.append(_write_csv(f"{stem}_slopes.csv", cols, ([r[c] for c in cols] for r in self.slopes)))
        if self.histograms:
            cols = ["N", "order", "omega", "eta", "m", "count"]
            rows = ([h["N"], h["order"], h["omega"], c["eta"], c["m"], c["count"]]
                    for h in self.histograms for c in h["counts"])
            written.append(_write_csv(f"{stem}_histograms.csv", cols, rows))
        if self.curves:
            series = self.curves["series"]
            cols = ["x", "reference"] + [f"N{s['N']}_order{s['order']}" for s in series]
            rows = zip(self.curves["x"], self.curves["reference"], *(s["estimate"] for s in series))
            written.append(_write_csv(f"{stem}_curves.csv", cols, rows))
        return written


def _write_csv(path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in r])
    return Path(path)


def run_experiment(exp_id: str, overrides: dict | None = None, *, seed: int = 0, out=None,
                   threads: int | None = None, budget: float | None = DEFAULT_BUDGET) -> ExperimentResult:
    """Run a named protocol with its defaults, updated by ``overrides``.

    Raises ``ValueError`` for unknown ids or parameters and
    :class:`BudgetExceeded` when the simulation cost estimate
    (``N^2 M R`` for pairwise drifts, ``N M R`` otherwise, summed over N)
    exceeds ``budget``.  ``budget=None`` disables the guard.
    """
    if exp_id not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {exp_id!r}; expected one of {sorted(EXPERIMENTS)}")
    params = json.loads(json.dumps(EXPERIMENTS[exp_id]))
    unknown = set(overrides or {}) - set(params)
    if unknown:
        raise ValueError(f"unknown parameters for {exp_id}: {sorted(unknown)}")
    params.update(overrides or {})
    params["n_values"] = [int(n) for n in params["n_values"]]
    params["seed"] = int(seed)
    threads = resolve_threads(threads)
    queries = parse_grid(params["grid"])

    if exp_id == "ou-rate":
        model = linear_interaction_model()
    elif exp_id == "double-layer-bandwidth":
        model = double_layer_model(perturbed=bool(params["perturbed"]))
    else:
        model = burgers_model(sigma=params["sigma"])
    check_budget(estimate_cost(model, params["n_values"], params["n_steps"], params["replicates"]), budget)

    result = ExperimentResult(experiment=exp_id, params=params)
    result.seeds = [{"replicate": j, "seed": replicate_seed(seed, j)} for j in range(params["replicates"])]
    start = time.perf_counter()

    if exp_id == "ou-rate":
        result.tables = mc_strong_error(
            model, params["n_values"], params["orders"], eval_grid=queries,
            replicates=params["replicates"], horizon=params["horizon"], n_steps=params["n_steps"],
            bandwidth=params["bandwidth"], omega=params["omega"], seed=seed, threads=threads,
        )
        if len(params["n_values"]) >= 2:
            for order in params["orders"]:
                pts = [(math.log2(r["N"]), math.log2(r["E_N"])) for r in result.tables if r["order"] == order]
                fit = fit_slope(pts)
                result.slopes.append({"order": order, **asdict(fit)})
    elif exp_id == "double-layer-bandwidth":
        for n in params["n_values"]:
            result.histograms.extend(bandwidth_histogram(
                model, n, params["orders"], params["omegas"], queries, params["replicates"],
                horizon=params["horizon"], n_steps=params["n_steps"], seed=seed, threads=threads,
            ))
    else:
        rows, hists, curves = _burgers_runs(
            model, params["n_values"], params["orders"], queries[:, np.newaxis], params["replicates"],
            params["horizon"], params["n_steps"], params["omega"], seed, threads,
        )
        result.tables, result.histograms, result.curves = rows, hists, curves

    result.wallclock_s = time.perf_counter() - start
    if out is not None:
        result.write(out)
    return result

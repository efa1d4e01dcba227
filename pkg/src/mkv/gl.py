"""Pointwise bandwidth selection by a Goldenshluger-Lepski comparison.

For a bandwidth grid ``H`` and query point ``x``:

    V(eta) = omega |K|_2^2 log(N) / (N eta^d)
    A(eta) = max_{eta' <= eta} [ (mu_eta(x) - mu_eta'(x))^2 - V(eta) - V(eta') ]_+
    eta_hat = argmin_eta A(eta) + V(eta)

with ties resolved toward the largest bandwidth.  Logarithms are natural.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .kde import DensityEstimate, _positions, as_points, kde_values
from .kernels import SUPPORTED_ORDERS, KernelSpec

__all__ = [
    "DEFAULT_OMEGA",
    "BandwidthGrid",
    "BandwidthSelection",
    "a_term",
    "adaptive_estimate",
    "a_terms",
    "bandwidth_grid",
    "fixed_bandwidth",
    "select_bandwidth",
    "select_bandwidths",
    "select_from_estimates",
    "variance_term",
]

DEFAULT_OMEGA = 23.0


@dataclass(frozen=True)
class BandwidthGrid:
    """Candidate bandwidths, sorted descending, with the ``m`` of each."""

    values: tuple[float, ...]
    m: tuple[int, ...] = ()
    n: int | None = None
    order: int | None = None
    dim: int | None = None

    def __post_init__(self):
        if not self.values:
            raise ValueError("bandwidth grid is empty")
        vals = np.asarray(self.values, dtype=float)
        if np.any(~(vals > 0)):
            raise ValueError("bandwidths must be positive")
        if np.any(np.diff(vals) >= 0):
            raise ValueError("grid values must be strictly descending")

    @classmethod
    def from_values(cls, values) -> BandwidthGrid:
        return cls(tuple(sorted({float(v) for v in values}, reverse=True)))

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def bandwidth_grid(n: int, order: int, dim: int = 1) -> BandwidthGrid:
    """``{(n / ln n)^(-1/(2m + dim)) : m = 1..order+1}``, largest first.

    >>> [round(v, 5) for v in bandwidth_grid(1024, 1).values]
    [0.36822, 0.18917]
    """
    if n < 3:
        raise ValueError(f"bandwidth grid needs n >= 3, got {n}")
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported kernel order {order}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    base = n / math.log(n)
    ms = range(order + 1, 0, -1)
    return BandwidthGrid(
        values=tuple(base ** (-1.0 / (2 * m + dim)) for m in ms),
        m=tuple(ms),
        n=n,
        order=order,
        dim=dim,
    )


def fixed_bandwidth(n: int, smoothness_proxy: int, dim: int = 1) -> float:
    """Rate-optimal bandwidth ``n^(-1/(2 s + dim))`` for smoothness ``s``."""
    if n < 1 or smoothness_proxy < 1:
        raise ValueError("n and smoothness_proxy must be >= 1")
    return float(n) ** (-1.0 / (2 * smoothness_proxy + dim))


def variance_term(eta, n: int, k: KernelSpec, omega: float = DEFAULT_OMEGA):
    """Penalty ``omega |K|_2^2 ln(n) / (n eta^d)``; vectorised over ``eta``."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    eta = np.asarray(eta, dtype=float)
    if np.any(~(eta > 0)):
        raise ValueError("bandwidths must be positive")
    v = omega * k.l2_norm_sq * math.log(n) / (n * eta**k.dim)
    return float(v) if v.ndim == 0 else v


def a_term(estimates: dict, v_terms: dict, eta: float) -> float:
    """Comparison term for one bandwidth, from per-bandwidth dictionaries."""
    if eta not in estimates or eta not in v_terms:
        raise KeyError(f"no estimate for bandwidth {eta}")
    missing = set(estimates) ^ set(v_terms)
    if missing:
        raise KeyError(f"estimates and variance terms disagree on bandwidths {sorted(missing)}")
    best = 0.0
    for other in estimates:
        if other <= eta:
            gap = (estimates[eta] - estimates[other]) ** 2 - v_terms[eta] - v_terms[other]
            best = max(best, gap)
    return best


def a_terms(estimates: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorised comparison terms.

    ``estimates`` has shape ``(B, G)`` for a descending grid of ``B``
    bandwidths; ``v`` has shape ``(B,)``.  Returns ``(B, G)``.
    """
    est = np.asarray(estimates, dtype=float)
    v = np.asarray(v, dtype=float)
    b = est.shape[0]
    out = np.zeros_like(est)
    for i in range(b):
        # rows i..B-1 hold bandwidths <= grid[i]
        gaps = (est[i] - est[i:]) ** 2 - v[i] - v[i:, np.newaxis]
        out[i] = np.maximum(gaps.max(axis=0), 0.0)
    return out


@dataclass(eq=False)
class BandwidthSelection:
    """Selection trace at one query point."""

    x: np.ndarray
    omega: float
    etas: np.ndarray
    estimates: np.ndarray
    a: np.ndarray
    v: np.ndarray
    index: int

    @property
    def eta(self) -> float:
        return float(self.etas[self.index])

    @property
    def estimate(self) -> float:
        return float(self.estimates[self.index])

    @property
    def total(self) -> np.ndarray:
        return self.a + self.v

    def to_dict(self) -> dict:
        return {
            "x": [float(c) for c in np.atleast_1d(self.x)],
            "omega": self.omega,
            "selected": self.eta,
            "grid": [
                {
                    "eta": float(e),
                    "estimate": float(m),
                    "A": float(a),
                    "V": float(v),
                    "A+V": float(a + v),
                    "selected": i == self.index,
                }
                for i, (e, m, a, v) in enumerate(zip(self.etas, self.estimates, self.a, self.v))
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def select_from_estimates(estimates: np.ndarray, v: np.ndarray):
    """Indices of the selected bandwidths from precomputed estimates.

    Returns ``(index, a)`` where ``index`` has shape ``(G,)``.  The grid is
    descending, so ``argmin`` (first minimum) breaks ties toward the
    largest bandwidth.
    """
    a = a_terms(estimates, v)
    total = a + np.asarray(v, dtype=float)[:, np.newaxis]
    return np.argmin(total, axis=0), a


def select_bandwidths(ens, k: KernelSpec, grid: BandwidthGrid, omega: float, queries,
                      threads: int | None = 1) -> list[BandwidthSelection]:
    """Run the selection independently at every query point."""
    pos = _positions(ens)
    q = as_points(queries, pos.shape[1])
    etas = grid.as_array()
    v = variance_term(etas, pos.shape[0], k, omega)
    est = kde_values(pos, k, etas, q, threads)
    index, a = select_from_estimates(est, v)
    return [
        BandwidthSelection(q[j], float(omega), etas, est[:, j], a[:, j], v, int(index[j]))
        for j in range(q.shape[0])
    ]


def select_bandwidth(ens, k: KernelSpec, grid: BandwidthGrid, omega: float, x) -> BandwidthSelection:
    """Selected bandwidth and full trace at a single point ``x``."""
    pos = _positions(ens)
    q = as_points(x, pos.shape[1])
    if q.shape[0] != 1:
        raise ValueError("select_bandwidth takes a single query point")
    return select_bandwidths(pos, k, grid, omega, q)[0]


def adaptive_estimate(ens, k: KernelSpec, grid: BandwidthGrid, omega: float, queries,
                      threads: int | None = 1) -> DensityEstimate:
    """Density estimate using the selected bandwidth at each query point."""
    pos = _positions(ens)
    q = as_points(queries, pos.shape[1])
    etas = grid.as_array()
    v = variance_term(etas, pos.shape[0], k, omega)
    est = kde_values(pos, k, etas, q, threads)
    index, _ = select_from_estimates(est, v)
    cols = np.arange(q.shape[0])
    meta = {"omega": float(omega)}
    if hasattr(ens, "seed"):
        meta.update(seed=ens.seed, step=ens.step, time=ens.time)
    return DensityEstimate(q, est[index, cols], etas[index], k.order, pos.shape[0], meta)

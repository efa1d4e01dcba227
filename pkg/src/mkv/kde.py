"""Direct-sum kernel density estimation on particle ensembles.

The estimate at ``x`` with bandwidth ``eta`` is

    mu_hat(x) = N^-1 sum_n eta^-d K((x - X_n) / eta)

computed exactly, with particles summed in index order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec
from .particles import ParticleEnsemble, resolve_threads

__all__ = ["DensityEstimate", "as_points", "estimate_density", "kde_values"]

# Upper bound on query-particle pairs held in memory at once.
_MAX_PAIRS = 1 << 21


def as_points(x, dim: int) -> np.ndarray:
    """Coerce query points to shape ``(G, dim)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, np.newaxis] if dim == 1 else x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"query points must have shape (G, {dim}), got {x.shape}")
    return x


def _positions(ens) -> np.ndarray:
    if isinstance(ens, ParticleEnsemble):
        return ens.positions
    pos = np.asarray(ens, dtype=float)
    return pos[:, np.newaxis] if pos.ndim == 1 else pos


def kde_values(positions: np.ndarray, kernel: KernelSpec, etas, queries: np.ndarray,
               threads: int | None = 1) -> np.ndarray:
    """Estimates for several bandwidths at once.

    Parameters
    ----------
    positions : (N, d) array
    kernel : KernelSpec
    etas : (B,) array of scalar bandwidths, or (B, G) per-point bandwidths
    queries : (G, d) array

    Returns
    -------
    (B, G) array
    """
    positions = np.asarray(positions, dtype=float)
    n, d = positions.shape
    if kernel.dim != d:
        raise ValueError(f"kernel dim {kernel.dim} does not match ensemble dim {d}")
    etas = np.asarray(etas, dtype=float)
    if etas.ndim == 1:
        etas = np.broadcast_to(etas[:, np.newaxis], (etas.size, queries.shape[0]))
    if np.any(~(etas > 0)):
        raise ValueError("bandwidths must be positive")
    g = queries.shape[0]
    out = np.empty(etas.shape)
    block = max(1, _MAX_PAIRS // n)

    def work(lo: int) -> None:
        hi = min(lo + block, g)
        diff = queries[lo:hi, np.newaxis, :] - positions[np.newaxis, :, :]
        for b in range(etas.shape[0]):
            eta = etas[b, lo:hi]
            vals = kernel.profile(diff / eta[:, np.newaxis, np.newaxis])
            kv = vals[..., 0] if d == 1 else np.prod(vals, axis=-1)
            out[b, lo:hi] = kv.sum(axis=1) / n / eta**d

    starts = range(0, g, block)
    threads = resolve_threads(threads)
    if threads > 1 and g > block:
        with ThreadPoolExecutor(threads) as pool:
            for fut in [pool.submit(work, lo) for lo in starts]:
                fut.result()
    else:
        for lo in starts:
            work(lo)
    return out


@dataclass(eq=False)
class DensityEstimate:
    """Density values at query points.

    ``bandwidth`` is a float for a global bandwidth or a ``(G,)`` array when
    each point was smoothed with its own (e.g. data-driven) bandwidth.
    """

    queries: np.ndarray
    values: np.ndarray
    bandwidth: float | np.ndarray
    order: int
    n: int
    meta: dict = field(default_factory=dict)

    @property
    def adaptive(self) -> bool:
        return np.ndim(self.bandwidth) > 0

    def rows(self) -> np.ndarray:
        """``(G, d + 1[+1])`` table of coordinates, density[, bandwidth]."""
        cols = [self.queries, self.values[:, np.newaxis]]
        if self.adaptive:
            cols.append(np.asarray(self.bandwidth)[:, np.newaxis])
        return np.hstack(cols)


def estimate_density(ens, k: KernelSpec, eta, queries, threads: int | None = 1) -> DensityEstimate:
    """Kernel estimate of the ensemble's density at ``queries``.

    ``eta`` is a positive float, or a ``(G,)`` array of per-point bandwidths.

    >>> from mkv.kernels import make_kernel
    >>> est = estimate_density(np.zeros((1, 1)), make_kernel(1), 2.0, [0.0])
    >>> round(float(est.values[0]), 10)
    0.1994711402
    """
    pos = _positions(ens)
    q = as_points(queries, pos.shape[1])
    eta_arr = np.asarray(eta, dtype=float)
    if eta_arr.ndim == 0:
        if not eta_arr > 0:
            raise ValueError(f"bandwidth must be positive, got {eta}")
        values = kde_values(pos, k, eta_arr.reshape(1), q, threads)[0]
        bandwidth: float | np.ndarray = float(eta_arr)
    else:
        if eta_arr.shape != (q.shape[0],):
            raise ValueError("per-point bandwidths must match the number of queries")
        if np.any(~(eta_arr > 0)):
            raise ValueError("bandwidths must be positive")
        values = kde_values(pos, k, eta_arr[np.newaxis, :], q, threads)[0]
        bandwidth = eta_arr.copy()
    meta = {}
    if isinstance(ens, ParticleEnsemble):
        meta = {"seed": ens.seed, "step": ens.step, "time": ens.time}
    return DensityEstimate(q, values, bandwidth, k.order, pos.shape[0], meta)

"""Interacting-particle Euler scheme.

Each step moves every particle with the drift evaluated against the
pre-step empirical measure (synchronous update):

    X_n <- X_n + h b(t_m, X_n, mu_m) + sqrt(h) sigma(t_m, X_n) Z_n,m+1

``Z_n,m+1`` comes from the counter-based generator at coordinates
``(seed, stream n, step m+1, axis)``; step 0 is reserved for the initial
draw.  Particles are processed in fixed-size chunks, optionally on a thread
pool, and since chunking never depends on the thread count the result is
bitwise identical for any degree of parallelism.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np

from .models import InitialLaw, ModelSpec
from .rng import CounterRNG

__all__ = [
    "NonFiniteError",
    "ParticleEnsemble",
    "SimConfig",
    "euler_step",
    "resolve_threads",
    "sample_initial",
    "simulate",
    "simulate_path",
]

CHUNK = 2048


class NonFiniteError(RuntimeError):
    """A particle left the finite reals during a step."""

    def __init__(self, particle: int, step: int, value):
        self.particle = particle
        self.step = step
        super().__init__(f"particle {particle} became non-finite ({value}) at step {step}")


def resolve_threads(threads: int | None) -> int:
    """Explicit value, else ``$MKV_THREADS``, else 1."""
    if threads is None:
        threads = int(os.environ.get("MKV_THREADS", "1") or 1)
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    return threads


@dataclass(frozen=True)
class SimConfig:
    n_particles: int
    n_steps: int
    horizon: float
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1 or self.n_steps < 1:
            raise ValueError("n_particles and n_steps must be >= 1")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    def time_at(self, m: int) -> float:
        if m == self.n_steps:
            return float(self.horizon)
        return m * self.horizon / self.n_steps


@dataclass(eq=False)
class ParticleEnsemble:
    """Positions of ``N`` particles in ``R^d`` at one time, with provenance."""

    positions: np.ndarray
    time: float = 0.0
    seed: int | None = None
    step: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, np.newaxis]
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValueError(f"positions must be (N, d) with N >= 1, got shape {pos.shape}")
        self.positions = pos

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"ParticleEnsemble(n={self.n}, dim={self.dim}, time={self.time}, step={self.step})"


def _stream_ids(n: int, stream_ids) -> np.ndarray:
    if stream_ids is None:
        return np.arange(n, dtype=np.uint64)
    ids = np.asarray(stream_ids)
    if ids.shape != (n,):
        raise ValueError(f"stream_ids must have shape ({n},), got {ids.shape}")
    return ids.astype(np.uint64)


def sample_initial(law: InitialLaw, n: int, rng: CounterRNG, dim: int = 1,
                   stream_ids=None) -> ParticleEnsemble:
    """``n`` i.i.d. draws from ``law`` using step 0 of each particle stream."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if law.kind == "dirac":
        pos = np.full((n, dim), law.mean)
    else:
        z = rng.normals(_stream_ids(n, stream_ids), 0, dim)
        pos = law.mean + math.sqrt(law.var) * z
    return ParticleEnsemble(pos, time=0.0, seed=rng.seed, step=0)


def _check_finite(out: np.ndarray, step: int) -> None:
    if not np.isfinite(out).all():
        bad = np.flatnonzero(~np.isfinite(out).all(axis=1))[0]
        raise NonFiniteError(int(bad), step, out[bad])


def _step(x: np.ndarray, model: ModelSpec, t: float, h: float, rng: CounterRNG, step_index: int,
          ids: np.ndarray, pool: Executor | None, drift_method: str) -> np.ndarray:
    n, d = x.shape
    summary = model.prepare(t, x) if drift_method != "pairwise" else None
    out = np.empty_like(x)
    sqrt_h = math.sqrt(h)

    def work(lo: int) -> None:
        hi = min(lo + CHUNK, n)
        xi = x[lo:hi]
        b = model.drift(t, xi, x, summary, method=drift_method)
        z = rng.normals(ids[lo:hi], step_index, d)
        sig = model.diffusion(t, xi)
        noise = sig * z if np.ndim(sig) == 0 else np.einsum("qij,qj->qi", sig, z)
        out[lo:hi] = xi + h * b + sqrt_h * noise

    starts = range(0, n, CHUNK)
    if pool is None or n <= CHUNK:
        for lo in starts:
            work(lo)
    else:
        for fut in [pool.submit(work, lo) for lo in starts]:
            fut.result()
    return out


def euler_step(state: ParticleEnsemble, model: ModelSpec, h: float, rng: CounterRNG,
               t: float | None = None, *, stream_ids=None, threads: int | None = 1,
               drift_method: str = "auto") -> ParticleEnsemble:
    """Advance ``state`` by one Euler step of size ``h``.

    Raises
    ------
    NonFiniteError
        If any coordinate becomes inf or nan; names the particle and step.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    t = state.time if t is None else t
    ids = _stream_ids(state.n, stream_ids)
    threads = resolve_threads(threads)
    ctx = ThreadPoolExecutor(threads) if threads > 1 else nullcontext()
    with ctx as pool:
        out = _step(state.positions, model, t, h, rng, state.step + 1, ids, pool, drift_method)
    _check_finite(out, state.step + 1)
    return ParticleEnsemble(out, time=t + h, seed=rng.seed, step=state.step + 1, meta=dict(state.meta))


def _run(cfg: SimConfig, model: ModelSpec, every: int | None, threads, drift_method, stream_ids):
    rng = CounterRNG(cfg.seed)
    ids = _stream_ids(cfg.n_particles, stream_ids)
    state = sample_initial(model.initial, cfg.n_particles, rng, model.dim, ids)
    x = state.positions
    h = cfg.step
    meta = {"model": model.name, "n_steps": cfg.n_steps, "horizon": cfg.horizon}
    snapshots = []
    if every:
        snapshots.append(ParticleEnsemble(x.copy(), 0.0, cfg.seed, 0, dict(meta)))
    threads = resolve_threads(threads)
    ctx = ThreadPoolExecutor(threads) if threads > 1 else nullcontext()
    with ctx as pool:
        for m in range(cfg.n_steps):
            x = _step(x, model, cfg.time_at(m), h, rng, m + 1, ids, pool, drift_method)
            _check_finite(x, m + 1)
            if every and ((m + 1) % every == 0 or m + 1 == cfg.n_steps):
                snapshots.append(ParticleEnsemble(x.copy(), cfg.time_at(m + 1), cfg.seed, m + 1, dict(meta)))
    final = ParticleEnsemble(x, cfg.horizon, cfg.seed, cfg.n_steps, meta)
    return final, snapshots


def simulate(cfg: SimConfig, model: ModelSpec, *, threads: int | None = 1,
             drift_method: str = "auto", stream_ids=None) -> ParticleEnsemble:
    """Run ``cfg.n_steps`` Euler steps from a fresh initial sample.

    The result depends only on ``(cfg, model)``; ``threads`` changes speed,
    never values.  ``drift_method="pairwise"`` forces brute-force drift
    evaluation.  ``stream_ids`` reassigns RNG streams to particles (default:
    particle ``n`` uses stream ``n``).
    """
    final, _ = _run(cfg, model, None, threads, drift_method, stream_ids)
    return final


def simulate_path(cfg: SimConfig, model: ModelSpec, every: int = 1, *, threads: int | None = 1,
                  drift_method: str = "auto", stream_ids=None) -> list[ParticleEnsemble]:
    """Like :func:`simulate` but keeps a snapshot every ``every`` steps.

    The list starts with the initial sample and always ends at the horizon.
    """
    if every < 1:
        raise ValueError("every must be >= 1")
    _, snaps = _run(cfg, model, every, threads, drift_method, stream_ids)
    return snaps

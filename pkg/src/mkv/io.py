"""CSV/JSON serialisation for ensembles, density estimates and results.

Floats are written with 17 significant digits, which round-trips every
double exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .kde import DensityEstimate
from .particles import ParticleEnsemble

__all__ = [
    "FLOAT_FMT",
    "fmt",
    "read_ensemble",
    "sidecar_path",
    "write_density",
    "write_ensemble",
    "write_json",
]

FLOAT_FMT = "%.17g"


def fmt(v) -> str:
    return FLOAT_FMT % v


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_ensemble(path, ens: ParticleEnsemble, meta: dict | None = None) -> Path:
    """Write ``particle,dim0,...`` rows plus a JSON sidecar next to ``path``.

    Returns the sidecar path.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["particle"] + [f"dim{j}" for j in range(ens.dim)])
        for i, row in enumerate(ens.positions):
            w.writerow([i] + [fmt(v) for v in row])
    info = {
        "seed": ens.seed,
        "N": ens.n,
        "M": ens.meta.get("n_steps", ens.step),
        "T": ens.meta.get("horizon", ens.time),
        "model": ens.meta.get("model"),
        "time": ens.time,
        "step": ens.step,
        "dim": ens.dim,
    }
    if meta:
        info.update(meta)
    side = sidecar_path(path)
    write_json(side, info)
    return side


def read_ensemble(path) -> ParticleEnsemble:
    """Read an ensemble CSV; provenance comes from the sidecar if present."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "particle" or len(header) < 2:
            raise ValueError(f"{path}: expected header 'particle,dim0[,dim1,...]'")
        rows = [[float(v) for v in r[1:]] for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no particles")
    pos = np.array(rows, dtype=float)
    if pos.shape[1] != len(header) - 1:
        raise ValueError(f"{path}: ragged rows")
    side = sidecar_path(path)
    time, seed, step, meta = 0.0, None, 0, {}
    if side.exists():
        info = json.loads(side.read_text())
        time = float(info.get("time", 0.0))
        seed = info.get("seed")
        step = int(info.get("step", info.get("M", 0)) or 0)
        meta = {"model": info.get("model"), "n_steps": info.get("M"), "horizon": info.get("T")}
    return ParticleEnsemble(pos, time=time, seed=seed, step=step, meta=meta)


def write_density(path, est: DensityEstimate) -> None:
    """Write ``x[,y,...],density[,bandwidth]`` rows."""
    d = est.queries.shape[1]
    names = ["x", "y", "z"][:d] if d <= 3 else [f"x{j}" for j in range(d)]
    header = names + ["density"] + (["bandwidth"] if est.adaptive else [])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in est.rows():
            w.writerow([fmt(v) for v in row])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")

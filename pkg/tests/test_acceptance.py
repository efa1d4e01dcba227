"""Acceptance suite: one test per numbered criterion, at the stated tolerances.

Each test also asserts its runtime bound.  Bounds quoted for a 4-core
desktop are applied unchanged on the single-core test machine.
"""

import math
import time

import numpy as np
import pytest

from mkv.gl import a_term, a_terms, bandwidth_grid, select_bandwidth
from mkv.harness import fit_slope, mc_strong_error, replicate_seed, run_experiment
from mkv.kde import estimate_density
from mkv.kernels import SUPPORTED_ORDERS, check_moments, make_kernel
from mkv.models import burgers_reference, get_model
from mkv.particles import SimConfig, simulate

SIGMA = math.sqrt(0.2)


@pytest.mark.acceptance(1, "kernel validity")
def test_kernel_validity(record_property):
    start = time.perf_counter()
    make_kernel.cache_clear()
    worst = 0.0
    for order in SUPPORTED_ORDERS:
        for r in check_moments(make_kernel(order), order):
            worst = max(worst, abs(r.moment - r.expected))
    l2 = make_kernel(1).l2_norm_sq
    elapsed = time.perf_counter() - start
    record_property("detail", f"max moment error {worst:.1e}, |K|^2 = {l2:.8f}")
    assert worst < 1e-8
    assert abs(l2 - 1 / (2 * math.sqrt(math.pi))) < 1e-7
    assert abs(l2 - 0.2820948) < 1e-7
    assert elapsed < 1.0


@pytest.mark.acceptance(2, "OU stationarity")
def test_ou_stationarity(record_property):
    start = time.perf_counter()
    ens = simulate(SimConfig(2**12, 100, 1.0, seed=0), get_model("ou-linear"))
    elapsed = time.perf_counter() - start
    mean, var = ens.positions.mean(), ens.positions.var()
    record_property("detail", f"mean {mean:.4f}, variance {var:.4f}")
    assert 2.95 <= mean <= 3.05
    assert 0.45 <= var <= 0.55
    assert elapsed < 5.0


@pytest.mark.acceptance(3, "OU rate study")
def test_ou_rate_study(record_property):
    start = time.perf_counter()
    n_values = [2**k for k in range(7, 13)]
    rows = mc_strong_error(get_model("ou-linear"), n_values, [1, 3, 5],
                           eval_grid=np.linspace(0.0, 6.0, 1000), replicates=10,
                           horizon=1.0, n_steps=100, bandwidth="smooth", seed=0)
    elapsed = time.perf_counter() - start
    alpha = {}
    for order in (1, 3, 5):
        errs = [r["E_N"] for r in rows if r["order"] == order]
        assert all(e > 0 for e in errs)
        assert np.all(np.diff(errs) < 0), f"E_N not strictly decreasing for order {order}: {errs}"
        alpha[order] = fit_slope([(math.log2(n), math.log2(e)) for n, e in zip(n_values, errs)]).alpha
    record_property("detail", ", ".join(f"alpha_{o} = {a:.3f}" for o, a in alpha.items()))
    assert alpha[1] < alpha[3] <= alpha[5] + 0.05
    assert all(0.5 <= a <= 1.2 for a in alpha.values())
    assert elapsed < 600.0


@pytest.mark.acceptance(4, "GL selector on smooth target")
def test_gl_selector_smooth_target(record_property):
    start = time.perf_counter()
    n = 2**12
    k = make_kernel(5)
    grid = bandwidth_grid(n, 5)
    top_two = 0
    for j in range(100):
        ens = simulate(SimConfig(n, 100, 1.0, seed=replicate_seed(0, j)), get_model("ou-linear"))
        sel = select_bandwidth(ens, k, grid, 23.0, 3.0)
        top_two += sel.index < 2
    elapsed = time.perf_counter() - start
    record_property("detail", f"{top_two}/100 in the top two grid values")
    assert top_two >= 70
    assert elapsed < 120.0


@pytest.mark.acceptance(5, "Burgers reference")
def test_burgers_reference(record_property):
    start = time.perf_counter()
    x = np.arange(-5.0, 6.0 + 5e-4, 1e-3)
    cdf = burgers_reference(1.0, x, SIGMA)["cdf"]
    xs = np.linspace(-3.0, 4.0, 7001)
    dens = burgers_reference(1.0, xs, SIGMA)["density"]
    probes = np.linspace(-1.0, 1.5, 10)
    h = 1e-5
    fd = (burgers_reference(1.0, probes + h, SIGMA)["cdf"] - burgers_reference(1.0, probes - h, SIGMA)["cdf"]) / (2 * h)
    analytic = burgers_reference(1.0, probes, SIGMA)["density"]
    elapsed = time.perf_counter() - start
    mass = np.trapezoid(dens, xs)
    fd_err = float(np.max(np.abs(analytic - fd)))
    record_property("detail", f"mass {mass:.6f}, max FD gap {fd_err:.1e}")
    assert np.all(np.diff(cdf) >= 0)
    assert np.all(dens >= 0)
    assert abs(mass - 1.0) <= 1e-3
    assert fd_err < 1e-6
    assert elapsed < 1.0


@pytest.mark.acceptance(6, "Burgers reconstruction")
def test_burgers_reconstruction(record_property):
    start = time.perf_counter()
    res = run_experiment("burgers-recon", {
        "n_values": [2**12, 2**14],
        "orders": [5],
        "replicates": 5,
        "grid": [-3.0, 4.0, 1001],
        "omega": 23.0,
        "horizon": 1.0,
        "n_steps": 100,
    }, seed=0)
    elapsed = time.perf_counter() - start
    small, large = (r["median_sup_error"] for r in res.tables)
    record_property("detail", f"median sup error {small:.4f} at 2^12, {large:.4f} at 2^14")
    assert large < small
    assert elapsed < 300.0


def _naive(points, k, eta, queries):
    return np.array([
        sum(float(k(np.atleast_1d((q - p) / eta))) for p in points) / (len(points) * eta ** points.shape[1])
        for q in queries
    ])


@pytest.mark.acceptance(7, "oracle-equivalence property suite")
def test_oracle_equivalence(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(7)

    for model_id in ("ou-linear", "burgers"):
        m = get_model(model_id)
        for _ in range(50):
            n = int(rng.integers(1, 257))
            ens = rng.normal(3.0, 2.0, size=(n, 1))
            red = m.drift(0.0, ens, ens, method="reduced")
            pair = m.drift(0.0, ens, ens, method="pairwise")
            scale = max(float(np.abs(pair).max()), 1.0)
            assert np.all(np.abs(red - pair) <= 1e-12 * scale)

    for order in SUPPORTED_ORDERS:
        k = make_kernel(order)
        pts = rng.normal(size=(int(rng.integers(1, 101)), 1))
        q = np.linspace(-3, 3, 15)
        got = estimate_density(pts, k, 0.5, q).values
        want = _naive(pts, k, 0.5, q[:, None])
        assert np.all(np.abs(got - want) <= 1e-12 * np.abs(want).max())

    for _ in range(200):
        b = int(rng.integers(1, 8))
        est = rng.normal(size=(b, 4))
        v = np.sort(rng.uniform(1e-4, 0.5, size=b))
        etas = np.linspace(1.0, 0.1, b)
        a = a_terms(est, v)
        for j in range(4):
            emap, vmap = dict(zip(etas, est[:, j])), dict(zip(etas, v))
            assert np.allclose(a[:, j], [a_term(emap, vmap, e) for e in etas], rtol=1e-13, atol=1e-15)

    cfg = SimConfig(5000, 3, 0.3, seed=1)
    for model_id in ("ou-linear", "burgers"):
        serial = simulate(cfg, get_model(model_id), threads=1).positions
        parallel = simulate(cfg, get_model(model_id), threads=8).positions
        assert np.array_equal(serial, parallel)

    elapsed = time.perf_counter() - start
    record_property("detail", "drift, KDE, A-term and thread determinism oracles agree")
    assert elapsed < 30.0

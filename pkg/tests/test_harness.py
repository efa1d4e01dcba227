import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mkv.gl import BandwidthGrid, bandwidth_grid
from mkv.harness import (
    BudgetExceeded,
    estimate_cost,
    fit_slope,
    bandwidth_histogram,
    mc_strong_error,
    parse_grid,
    replicate_seed,
    run_experiment,
    strong_error,
    tally,
)
from mkv.models import double_layer_model, get_model


# -- statistics -----------------------------------------------------------------------


def test_strong_error_injections():
    ref = np.linspace(0, 1, 11)
    assert strong_error(np.tile(ref, (3, 1)), ref) == 0.0
    assert strong_error([[0.6]], [0.5]) == pytest.approx(0.01)
    assert strong_error([[0.4]], [0.5]) == pytest.approx(0.01)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 40), st.integers(1, 8)), elements=st.floats(-5, 5)))
def test_strong_error_equals_streaming_mean(est):
    ref = np.zeros(est.shape[1])
    mean = 0.0
    for j, row in enumerate(est, start=1):
        mean += (np.max(np.abs(row - ref)) ** 2 - mean) / j
    assert strong_error(est, ref) == pytest.approx(mean, rel=1e-12, abs=1e-12)


def test_fit_slope_examples():
    pts = [(x, -0.8 * x + 1) for x in range(7, 13)]
    fit = fit_slope(pts)
    assert fit.alpha == pytest.approx(0.8, abs=1e-14)
    assert fit.intercept == pytest.approx(1.0, abs=1e-12)
    assert fit.residual == pytest.approx(0.0, abs=1e-13)
    assert fit_slope([(7, -7), (8, -8)]).alpha == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.integers(2, 12), elements=st.floats(-30, 0)), st.floats(-50, 50))
def test_fit_slope_shift_invariance(ys, c):
    pts = [(7 + i, y) for i, y in enumerate(ys)]
    a = fit_slope(pts)
    b = fit_slope([(x, y + c) for x, y in pts])
    assert b.alpha == pytest.approx(a.alpha, abs=1e-12)
    assert b.intercept == pytest.approx(a.intercept + c, abs=1e-9)


@pytest.mark.parametrize("pts", [[(7, 1.0)], [(7, 1.0), (7, 2.0)], []])
def test_fit_slope_rejects_degenerate(pts):
    with pytest.raises(ValueError):
        fit_slope(pts)


def test_tally():
    g = BandwidthGrid((0.4,))
    assert tally([0.4] * 5, g) == [{"eta": 0.4, "m": None, "count": 5}]
    g2 = bandwidth_grid(1000, 3)
    counts = tally([g2.values[0]] * 7 + [g2.values[2]] * 3, g2)
    assert [c["count"] for c in counts] == [7, 0, 3, 0]
    with pytest.raises(ValueError):
        tally([0.123], g2)


# -- plumbing -------------------------------------------------------------------------


def test_parse_grid():
    np.testing.assert_array_equal(parse_grid("0:6:4"), [0.0, 2.0, 4.0, 6.0])
    np.testing.assert_array_equal(parse_grid([0.0, 1.0, 3]), [0.0, 0.5, 1.0])
    for bad in ("0:1", "1:0:5", "0:1:0", "a:b:c"):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_replicate_seeds_shared_and_distinct():
    seeds = [replicate_seed(9, j) for j in range(50)]
    assert len(set(seeds)) == 50
    assert seeds == [replicate_seed(9, j) for j in range(50)]


def test_cost_model():
    assert estimate_cost(get_model("ou-linear"), [100, 200], 10, 3) == 300 * 10 * 3
    assert estimate_cost(get_model("double-layer"), [100], 10, 3) == 100**2 * 10 * 3


# -- experiments ----------------------------------------------------------------------


def test_mc_strong_error_requires_reference():
    with pytest.raises(ValueError):
        mc_strong_error(get_model("double-layer"), [64], [1], eval_grid=[0.0], replicates=1)


def test_mc_strong_error_shape_and_positivity():
    rows = mc_strong_error(get_model("ou-linear"), [128, 256], [1, 5], eval_grid=np.linspace(0, 6, 50),
                           replicates=2, n_steps=10)
    assert [(r["N"], r["order"]) for r in rows] == [(128, 1), (128, 5), (256, 1), (256, 5)]
    assert all(r["E_N"] > 0 for r in rows)
    assert rows[0]["eta"] == pytest.approx(128 ** (-1 / 5))


def test_mc_strong_error_thread_invariant():
    kw = dict(eval_grid=np.linspace(0, 6, 40), replicates=3, n_steps=5)
    m = get_model("ou-linear")
    a = mc_strong_error(m, [200], [3], threads=1, **kw)
    b = mc_strong_error(m, [200], [3], threads=3, **kw)
    assert a == b


def test_histogram_counts_sum():
    q = np.linspace(-4, 4, 25)
    hists = bandwidth_histogram(double_layer_model(False), 64, [3, 5], [1.0, 20.0], q, 2, n_steps=10)
    assert len(hists) == 4
    for h in hists:
        assert sum(c["count"] for c in h["counts"]) == 2 * 25


def test_histogram_singleton_grid():
    q = np.linspace(-4, 4, 10)
    g = BandwidthGrid((0.5,))
    hists = bandwidth_histogram(double_layer_model(False), 64, [3], [23.0], q, 1, n_steps=5, grid=g)
    assert hists[0]["counts"] == [{"eta": 0.5, "m": None, "count": 10}]


def test_double_layer_histogram_peaks_at_largest_bandwidth():
    q = np.linspace(-4, 4, 100)
    (hist,) = bandwidth_histogram(double_layer_model(False), 2**10, [5], [23.0], q, 1)
    counts = [c["count"] for c in hist["counts"]]
    assert int(np.argmax(counts)) == 0


def test_run_experiment_small_override(tmp_path):
    out = tmp_path / "ou.json"
    res = run_experiment("ou-rate", {"replicates": 1, "n_values": [128], "orders": [3]}, seed=1, out=out)
    assert len(res.tables) == 1
    assert res.slopes == []
    data = json.loads(out.read_text())
    assert data["experiment"] == "ou-rate"
    assert data["tables"][0]["N"] == 128
    assert (tmp_path / "ou_errors.csv").read_text().startswith("N,order,E_N")


def test_run_experiment_is_reproducible():
    kw = dict(overrides={"replicates": 2, "n_values": [128, 256], "orders": [1, 3], "n_steps": 10}, seed=4)
    a = run_experiment("ou-rate", **kw)
    b = run_experiment("ou-rate", **kw)
    assert a.to_json(wallclock=False) == b.to_json(wallclock=False)
    assert len(a.slopes) == 2


def test_run_experiment_burgers_small(tmp_path):
    res = run_experiment("burgers-recon", {"n_values": [256], "orders": [3], "n_steps": 20,
                                           "grid": [-3, 4, 71]}, out=tmp_path / "b.json")
    row = res.tables[0]
    assert len(row["sup_errors"]) == 1
    assert row["median_sup_error"] > 0
    assert (tmp_path / "b_curves.csv").exists()
    assert (tmp_path / "b_histograms.csv").exists()


def test_run_experiment_rejects_unknown():
    with pytest.raises(ValueError):
        run_experiment("nope")
    with pytest.raises(ValueError):
        run_experiment("ou-rate", {"bogus": 1})


def test_budget_guard_reports_cost():
    with pytest.raises(BudgetExceeded) as info:
        run_experiment("double-layer-bandwidth")
    assert info.value.cost > 1e11
    assert math.isclose(info.value.cost, sum(n * n for n in [2**k for k in range(5, 17)]) * 100)

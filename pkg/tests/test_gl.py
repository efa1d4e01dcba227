import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mkv.gl import (
    BandwidthGrid,
    a_term,
    a_terms,
    adaptive_estimate,
    bandwidth_grid,
    fixed_bandwidth,
    select_bandwidth,
    select_bandwidths,
    select_from_estimates,
    variance_term,
)
from mkv.kde import estimate_density
from mkv.kernels import SUPPORTED_ORDERS, kernel_norms, make_kernel

K1 = make_kernel(1)


# -- grid -----------------------------------------------------------------------------


def test_grid_values_for_1024():
    g = bandwidth_grid(1024, 1)
    base = 1024 / math.log(1024)
    assert g.values[-1] == pytest.approx(base ** (-1 / 3), rel=1e-14)
    assert g.values[-1] == pytest.approx(0.18917, abs=5e-6)
    assert g.values[0] == pytest.approx(0.36821, abs=1e-5)
    assert g.m == (2, 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(10, 2**20), st.sampled_from(SUPPORTED_ORDERS), st.integers(1, 3))
def test_grid_invariants(n, order, dim):
    g = bandwidth_grid(n, order, dim)
    vals = g.as_array()
    assert len(g) == order + 1
    assert np.all(vals > 0)
    assert np.all(np.diff(vals) < 0)
    assert len(g) <= n
    # increasing in m, stored largest m first
    assert list(g.m) == sorted(g.m, reverse=True)


def test_grid_rejects_small_n():
    with pytest.raises(ValueError):
        bandwidth_grid(2, 1)


def test_grid_from_values_sorts_and_dedups():
    g = BandwidthGrid.from_values([0.1, 0.5, 0.1, 0.3])
    assert g.values == (0.5, 0.3, 0.1)
    with pytest.raises(ValueError):
        BandwidthGrid((0.1, 0.2))
    with pytest.raises(ValueError):
        BandwidthGrid(())


@pytest.mark.parametrize("n, s, expected", [(1024, 2, 0.25), (1, 3, 1.0), (2**15, 6, 2 ** (-15 / 13))])
def test_fixed_bandwidth(n, s, expected):
    assert fixed_bandwidth(n, s) == pytest.approx(expected, rel=1e-14)


def test_fixed_bandwidth_example_value():
    assert fixed_bandwidth(2**15, 6) == pytest.approx(0.449425, abs=5e-7)


# -- variance term --------------------------------------------------------------------


def test_variance_term_example():
    v = variance_term(0.5, 1024, K1, 23.0)
    assert v == pytest.approx(23 * K1.l2_norm_sq * math.log(1024) / 1024 / 0.5, rel=1e-14)
    assert v == pytest.approx(0.0878372, abs=5e-7)


def test_variance_term_halves_when_eta_doubles():
    assert variance_term(0.4, 500, K1) == pytest.approx(2 * variance_term(0.8, 500, K1), rel=1e-14)


@pytest.mark.parametrize("kwargs", [dict(omega=0.0), dict(omega=-1.0), dict(n=1)])
def test_variance_term_rejects(kwargs):
    args = dict(eta=0.5, n=100, k=K1, omega=23.0) | kwargs
    with pytest.raises(ValueError):
        variance_term(**args)


@pytest.mark.parametrize("order", SUPPORTED_ORDERS)
def test_variance_table_matches_recomputation(order):
    k = make_kernel(order)
    g = bandwidth_grid(4096, order)
    v = variance_term(g.as_array(), 4096, k, 23.0)
    l2 = kernel_norms(k)["l2_norm_sq"]
    again = np.array([23.0 * l2 * math.log(4096) / 4096 / e for e in g])
    np.testing.assert_allclose(v, again, rtol=1e-12)
    assert np.all(np.diff(v) > 0)  # grid descending, so V ascending along it


# -- A term ---------------------------------------------------------------------------


def test_a_term_two_point_case():
    est = {0.5: 1.0, 0.25: 1.3}
    v = {0.5: 0.01, 0.25: 0.02}
    assert a_term(est, v, 0.5) == pytest.approx(0.09 - 0.03)
    assert a_term(est, v, 0.25) == 0.0


def test_a_term_flat_and_singleton():
    est = {e: 0.7 for e in (0.4, 0.2, 0.1)}
    v = {e: 0.01 / e for e in est}
    assert all(a_term(est, v, e) == 0.0 for e in est)
    assert a_term({0.3: 5.0}, {0.3: 1.0}, 0.3) == 0.0


def test_a_term_missing_entry():
    with pytest.raises(KeyError):
        a_term({0.5: 1.0}, {0.5: 0.1}, 0.25)
    with pytest.raises(KeyError):
        a_term({0.5: 1.0, 0.25: 1.0}, {0.5: 0.1}, 0.5)


tables = st.integers(1, 7).flatmap(
    lambda b: st.tuples(
        arrays(float, (b, 5), elements=st.floats(-2, 2)),
        arrays(float, b, elements=st.floats(1e-4, 0.5)),
    )
)


@settings(max_examples=100, deadline=None)
@given(tables)
def test_vectorised_a_terms_match_definition(table):
    est, v = table
    etas = np.linspace(1.0, 0.1, est.shape[0])
    v = np.sort(v)  # V increases as eta decreases
    a = a_terms(est, v)
    for j in range(est.shape[1]):
        e_map = dict(zip(etas, est[:, j]))
        v_map = dict(zip(etas, v))
        want = [a_term(e_map, v_map, e) for e in etas]
        np.testing.assert_allclose(a[:, j], want, rtol=1e-13, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(tables)
def test_selection_properties(table):
    est, v = table
    v = np.sort(v)
    idx, a = select_from_estimates(est, v)
    assert np.all(a >= 0)
    total = a + v[:, np.newaxis]
    for j, i in enumerate(idx):
        assert np.all(total[i, j] <= total[:, j])
        # ties go to the largest bandwidth (smallest index)
        assert not np.any(total[:i, j] == total[i, j])


def test_a_is_not_monotone_in_eta():
    # each comparison involves the estimate at eta itself, so a smaller
    # bandwidth can carry a larger A than a bigger one
    est = np.array([[0.5], [0.0], [1.0]])
    a = a_terms(est, np.full(3, 0.25))
    assert a[:, 0].tolist() == [0.0, 0.5, 0.0]


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(1e-3, 1e3))
def test_flat_estimates_pick_largest_for_any_omega(level, c):
    g = bandwidth_grid(1000, 5)
    est = np.full((len(g), 4), level)
    v = variance_term(g.as_array(), 1000, make_kernel(5), 23.0 * c)
    idx, a = select_from_estimates(est, v)
    assert np.all(a == 0)
    assert np.all(idx == 0)


# -- end to end -----------------------------------------------------------------------


def test_singleton_grid_returns_its_value():
    pts = np.random.default_rng(0).normal(size=(50, 1))
    sel = select_bandwidth(pts, K1, BandwidthGrid((0.3,)), 23.0, 0.0)
    assert sel.eta == 0.3
    assert sel.a.tolist() == [0.0]


def test_selection_trace_roundtrips_to_json():
    pts = np.random.default_rng(1).normal(size=(200, 1))
    g = bandwidth_grid(200, 3)
    sel = select_bandwidth(pts, make_kernel(3), g, 23.0, 0.5)
    d = json.loads(sel.to_json())
    assert d["selected"] == sel.eta
    assert [row["eta"] for row in d["grid"]] == list(g.values)
    assert sum(row["selected"] for row in d["grid"]) == 1
    for row in d["grid"]:
        assert row["A+V"] == pytest.approx(row["A"] + row["V"])


def test_select_bandwidths_matches_per_point_calls():
    pts = np.random.default_rng(2).normal(size=(300, 1))
    k = make_kernel(5)
    g = bandwidth_grid(300, 5)
    q = np.linspace(-2, 2, 9)
    many = select_bandwidths(pts, k, g, 5.0, q)
    for x, sel in zip(q, many):
        one = select_bandwidth(pts, k, g, 5.0, x)
        assert one.eta == sel.eta
        np.testing.assert_array_equal(one.estimates, sel.estimates)


def test_adaptive_estimate_uses_selected_bandwidths():
    pts = np.random.default_rng(3).normal(size=(500, 1))
    k = make_kernel(3)
    g = bandwidth_grid(500, 3)
    q = np.linspace(-3, 3, 7)
    est = adaptive_estimate(pts, k, g, 1.0, q)
    sels = select_bandwidths(pts, k, g, 1.0, q)
    np.testing.assert_array_equal(est.bandwidth, [s.eta for s in sels])
    for i, s in enumerate(sels):
        direct = estimate_density(pts, k, s.eta, q[i:i + 1]).values[0]
        assert est.values[i] == pytest.approx(direct, rel=1e-14)

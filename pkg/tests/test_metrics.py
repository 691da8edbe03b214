import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcphd.metrics import OspaParams, RunStats, aggregate, cardinality_series, ospa, speedup

from oracles import ospa_brute_force, random_point_sets

point = st.tuples(st.floats(-300, 300), st.floats(-300, 300))
point_set = st.lists(point, max_size=4)


def test_ospa_examples():
    assert ospa([(0, 0)], []) == 100.0
    assert ospa([], [(0, 0)]) == 100.0
    assert ospa([], []) == 0.0
    assert ospa([(0, 0)], [(3, 4)]) == pytest.approx(5.0, rel=1e-15)
    assert ospa([(0, 0), (10, 0)], [(0, 1), (10, 1)]) == pytest.approx(1.0, rel=1e-15)


def test_ospa_examples_match_oracle():
    assert ospa_brute_force([(0, 0)], [(3, 4)]) == pytest.approx(5.0)
    assert ospa_brute_force([(0, 0), (10, 0)], [(0, 1), (10, 1)]) == pytest.approx(1.0)


def test_ospa_cutoff_and_order():
    assert ospa([(0, 0)], [(500, 0)]) == 100.0
    params = OspaParams(p=2, c=10)
    X, Y = [(0, 0), (5, 0)], [(0, 3)]
    assert ospa(X, Y, params) == pytest.approx(ospa_brute_force(X, Y, 2, 10), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(point_set, point_set)
def test_ospa_symmetric_identity_bounded(X, Y):
    assert ospa(X, Y) == ospa(Y, X)
    assert ospa(X, X) == 0.0
    assert 0.0 <= ospa(X, Y) <= 100.0


@settings(max_examples=100, deadline=None)
@given(point_set, point_set, point_set)
def test_ospa_triangle_inequality(X, Y, Z):
    assert ospa(X, Z) <= ospa(X, Y) + ospa(Y, Z) + 1e-9


def test_ospa_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        X, Y = random_point_sets(rng)
        assert ospa(X, Y) == pytest.approx(ospa_brute_force(X, Y), rel=1e-9, abs=1e-12)


def test_cardinality_series():
    t, e = cardinality_series([0, 0, 0], [[], [], []])
    assert list(t) == [0, 0, 0] and list(e) == [0, 0, 0]
    t, e = cardinality_series([1, 2], [["a"], ["a", "b", "c"]])
    assert list(e) == [1, 3]
    with pytest.raises(ValueError):
        cardinality_series([1, 2], [[]])


def _run(o, t=1.0):
    return RunStats([o, o], [1, 1], [1, 1], t)


def test_aggregate_single_run():
    s = aggregate([_run(3.3, 2.0)])
    assert s["mean_ospa"] == pytest.approx(3.3) and s["std_ospa"] == 0.0
    assert s["mean_time"] == 2.0


def test_aggregate_two_runs():
    s = aggregate([_run(3.0), _run(3.2)])
    assert s["mean_ospa"] == pytest.approx(3.1, rel=1e-12)
    assert s["std_ospa"] == pytest.approx(math.sqrt(0.02), rel=1e-12)


def test_speedup_table_values():
    assert speedup(17.6540, 8.6331) == pytest.approx(2.04, abs=0.005)
    s = aggregate([_run(1.0, 8.6331)], serial_time=17.6540)
    assert s["speedup"] == pytest.approx(2.045, abs=0.001)


def test_runstats_lengths_checked():
    with pytest.raises(ValueError):
        RunStats([1.0], [1, 2], [1], 0.0)

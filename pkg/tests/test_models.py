import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcphd.models import (
    BirthModel,
    ClutterModel,
    MeasurementSet,
    MotionModel,
    SensorModel,
    clutter_intensity,
    cv_transition,
    generate_clutter,
    likelihood,
    measure,
    sample_births,
    wrap_angle,
)

NOISELESS = MotionModel(sigma_wx=0.0, sigma_wy=0.0)
SENSOR = SensorModel()
DEFAULT_BIRTH = BirthModel()

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_transition_noiseless_examples():
    np.testing.assert_array_equal(cv_transition([0, 3, 0, -3], NOISELESS, np.random.default_rng(0)), [3, 3, -3, -3])
    np.testing.assert_array_equal(cv_transition([10, 0, 20, 0], NOISELESS, np.random.default_rng(0)), [10, 0, 20, 0])


@given(st.lists(finite, min_size=4, max_size=4), st.floats(0.01, 10))
def test_transition_matches_explicit_matrix_product(state, T):
    motion = MotionModel(T=T, sigma_wx=0.0, sigma_wy=0.0)
    F = [[1, T, 0, 0], [0, 1, 0, 0], [0, 0, 1, T], [0, 0, 0, 1]]
    expected = [sum(F[i][j] * state[j] for j in range(4)) for i in range(4)]
    np.testing.assert_allclose(cv_transition(state, motion), expected, rtol=1e-12, atol=1e-9)


def test_transition_monte_carlo_mean():
    motion = MotionModel(T=1.0, sigma_wx=0.025, sigma_wy=4.0)
    n = 100_000
    out = cv_transition(np.tile([0.0, 3.0, 0.0, -3.0], (n, 1)), motion, np.random.default_rng(1))
    # per-component std of G w
    std = np.array([0.5 * 0.025, 0.025, 0.5 * 4.0, 4.0])
    assert np.all(np.abs(out.mean(axis=0) - [3, 3, -3, -3]) <= 3 * std / math.sqrt(n))


def test_transition_deterministic_given_rng_state():
    motion = MotionModel()
    a = cv_transition([1, 2, 3, 4], motion, np.random.default_rng(5))
    b = cv_transition([1, 2, 3, 4], motion, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("state, expected", [
    ((3, 0, 4, 0), (5.0, math.atan2(4, 3))),
    ((100, 0, 0, 0), (100.0, 0.0)),
    ((0, 0, -7, 0), (7.0, -math.pi / 2)),
    ((0, 0, 0, 0), (0.0, 0.0)),
])
def test_measure_noiseless(state, expected):
    np.testing.assert_allclose(measure(state, SENSOR), expected, rtol=0, atol=1e-12)


def test_measure_atan2_value():
    assert measure((3, 0, 4, 0), SENSOR)[1] == pytest.approx(0.9273, abs=1e-4)


def test_bearing_normalized_half_open():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    z = measure(np.zeros((1000, 4)) + [-5, 0, 0, 0], SENSOR, np.random.default_rng(0))
    assert np.all((z[:, 1] > -math.pi) & (z[:, 1] <= math.pi))


@given(st.floats(-150, 150), st.floats(-150, 150), st.floats(-20, 20), st.floats(-20, 20))
def test_range_bearing_round_trip(x, y, sx, sy):
    sensor = SensorModel(position=(sx, sy))
    r, b = measure((x, 0, y, 0), sensor)
    back = (sx + r * math.cos(b), 0, sy + r * math.sin(b), 0)
    np.testing.assert_allclose(measure(back, sensor), (r, b), rtol=0, atol=1e-9)


def test_likelihood_peak_value():
    state = np.array([30.0, 0, 40.0, 0])
    z = measure(state, SENSOR)
    peak = 1.0 / (2 * math.pi * 5 * 0.05)
    assert likelihood(z, state, SENSOR) == pytest.approx(peak, rel=1e-12)
    assert peak == pytest.approx(0.63662, abs=1e-5)


def test_likelihood_one_sigma_ratio():
    state = np.array([30.0, 0, 40.0, 0])
    r, b = measure(state, SENSOR)
    peak = likelihood((r, b), state, SENSOR)
    assert likelihood((r + 5.0, b), state, SENSOR) == pytest.approx(peak * math.exp(-0.5), rel=1e-12)


def test_likelihood_wrap_symmetry():
    # target straight behind the sensor: predicted bearing is +pi
    state = np.array([-50.0, 0, 0.0, 0])
    assert likelihood((50.0, math.pi), state, SENSOR) == likelihood((50.0, -math.pi), state, SENSOR)
    assert likelihood((50.0, -math.pi + 0.01), state, SENSOR) == pytest.approx(
        likelihood((50.0, math.pi - 0.01), state, SENSOR), rel=1e-9)


def test_likelihood_integrates_to_one():
    state = np.array([60.0, 0, -80.0, 0])
    r0, b0 = measure(state, SENSOR)
    dr, db = SENSOR.sigma_range / 10, SENSOR.sigma_bearing / 10
    R = r0 + np.arange(-60, 61) * dr
    B = b0 + np.arange(-60, 61) * db
    grid = np.stack(np.meshgrid(R, B, indexing="ij"), axis=-1).reshape(-1, 2)
    total = likelihood(grid, state, SENSOR).sum() * dr * db
    assert abs(total - 1.0) < 1e-2


def test_likelihood_batched_shape():
    states = np.random.default_rng(0).normal(size=(7, 4)) * 50
    zs = np.random.default_rng(1).uniform(1, 100, size=(3, 2))
    L = likelihood(zs, states, SENSOR)
    assert L.shape == (7, 3)
    assert L[4, 2] == pytest.approx(likelihood(zs[2], states[4], SENSOR), rel=1e-14)


def test_sample_births_empty_and_degenerate():
    assert sample_births(0, DEFAULT_BIRTH, np.random.default_rng(0)).shape == (0, 4)
    degenerate = BirthModel(covariance=tuple(tuple(0.0 for _ in range(4)) for _ in range(4)))
    out = sample_births(3, degenerate, np.random.default_rng(0))
    np.testing.assert_array_equal(out, np.tile(degenerate.mean, (3, 1)))


def test_sample_births_monte_carlo_mean():
    n = 100_000
    out = sample_births(n, DEFAULT_BIRTH, np.random.default_rng(2))
    tol = 3 * np.sqrt(np.diag(DEFAULT_BIRTH.covariance) / n)
    assert np.all(np.abs(out.mean(axis=0) - DEFAULT_BIRTH.mean) <= tol)


def test_birth_rejects_bad_covariance():
    with pytest.raises(ValueError):
        BirthModel(covariance=((1, 2, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)))
    with pytest.raises(ValueError):
        BirthModel(covariance=((-1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)))


def test_clutter_intensity_values():
    c = ClutterModel(rate=10.0)
    assert clutter_intensity((100.0, 0.3), c) == pytest.approx(10 / (math.pi * 200), rel=1e-12)
    assert clutter_intensity((100.0, 0.3), c) == pytest.approx(0.015915, abs=1e-6)
    assert clutter_intensity((100.0, 0.3), ClutterModel(rate=0.0)) == 0.0
    assert clutter_intensity((300.0, 0.3), c) == 0.0


def test_clutter_intensity_integrates_to_rate():
    # piecewise-constant density: midpoint sum on a grid covering the box is exact
    c = ClutterModel(rate=7.5)
    nb, nr = 64, 80
    b = np.linspace(-math.pi / 2, math.pi / 2, nb + 1)
    r = np.linspace(0, 200, nr + 1)
    mids = np.stack(np.meshgrid((r[:-1] + r[1:]) / 2, (b[:-1] + b[1:]) / 2, indexing="ij"), axis=-1).reshape(-1, 2)
    total = clutter_intensity(mids, c).sum() * (math.pi / nb) * (200 / nr)
    assert total == pytest.approx(7.5, rel=1e-12)


def test_generate_clutter_zero_rate():
    rng = np.random.default_rng(0)
    assert all(len(generate_clutter(ClutterModel(rate=0.0), rng)) == 0 for _ in range(100))


def test_generate_clutter_poisson_mean_and_support():
    c = ClutterModel(rate=10.0)
    rng = np.random.default_rng(3)
    draws = [generate_clutter(c, rng) for _ in range(10_000)]
    counts = np.array([len(d) for d in draws])
    assert abs(counts.mean() - 10) <= 3 * math.sqrt(10 / 10_000)
    pts = np.concatenate(draws)
    assert np.all(clutter_intensity(pts, c) > 0)


def test_measurement_set_labels():
    Z = MeasurementSet(np.array([[1.0, 0.1], [2.0, 0.2], [3.0, 0.3]]))
    assert list(Z.labels) == [1, 2, 3]
    assert [m.label for m in Z] == [1, 2, 3]
    assert len(MeasurementSet(np.empty((0, 2)))) == 0


@pytest.mark.parametrize("kwargs", [dict(T=0), dict(sigma_wx=-1), dict(survival_probability=1.5)])
def test_motion_validation(kwargs):
    with pytest.raises(ValueError):
        MotionModel(**kwargs)


def test_sensor_validation():
    with pytest.raises(ValueError):
        SensorModel(sigma_range=0)

"""Target dynamics, range-bearing sensor, birth and clutter models.

All sampling functions take an explicit ``numpy.random.Generator`` so that
parallel callers can own disjoint streams.  States are arrays laid out as
``[x, vx, y, vy]``; measurements are ``[range, bearing]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

STATE_DIM = 4
MEAS_DIM = 2


class StateVector(NamedTuple):
    x: float
    vx: float
    y: float
    vy: float


class Measurement(NamedTuple):
    range: float
    bearing: float
    label: int


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    # np.mod sends +pi to -pi; the interval is closed at +pi
    return np.where(w == -np.pi, np.pi, w)


@dataclass(frozen=True)
class MotionModel:
    """Nearly constant velocity motion with per-axis acceleration noise."""

    T: float = 1.0
    sigma_wx: float = 0.025
    sigma_wy: float = 4.0
    survival_probability: float = 0.9

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"sampling period T must be > 0, got {self.T}")
        if self.sigma_wx < 0 or self.sigma_wy < 0:
            raise ValueError("process noise standard deviations must be >= 0")
        if not 0.0 <= self.survival_probability <= 1.0:
            raise ValueError("survival_probability must lie in [0, 1]")

    @cached_property
    def F(self) -> np.ndarray:
        T = self.T
        return np.array([[1.0, T, 0.0, 0.0],
                         [0.0, 1.0, 0.0, 0.0],
                         [0.0, 0.0, 1.0, T],
                         [0.0, 0.0, 0.0, 1.0]])

    @cached_property
    def G(self) -> np.ndarray:
        h = self.T ** 2 / 2.0
        return np.array([[h, 0.0],
                         [1.0, 0.0],
                         [0.0, h],
                         [0.0, 1.0]])


@dataclass(frozen=True)
class SensorModel:
    position: tuple[float, float] = (0.0, 0.0)
    sigma_range: float = 5.0
    sigma_bearing: float = 0.05

    def __post_init__(self):
        if not (self.sigma_range > 0 and self.sigma_bearing > 0):
            raise ValueError("sensor noise standard deviations must be > 0")


@dataclass(frozen=True)
class BirthModel:
    """Gaussian birth intensity scaled by the expected number of births per scan."""

    mean: tuple[float, ...] = (0.0, 3.0, 0.0, -3.0)
    covariance: tuple[tuple[float, ...], ...] = ((10.0, 0.0, 0.0, 0.0),
                                                 (0.0, 1.0, 0.0, 0.0),
                                                 (0.0, 0.0, 10.0, 0.0),
                                                 (0.0, 0.0, 0.0, 1.0))
    expected_births_per_scan: float = 0.2

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        Q = np.asarray(self.covariance, dtype=float)
        if m.shape != (STATE_DIM,):
            raise ValueError(f"birth mean must have {STATE_DIM} components")
        if Q.shape != (STATE_DIM, STATE_DIM):
            raise ValueError("birth covariance must be 4x4")
        if not np.allclose(Q, Q.T):
            raise ValueError("birth covariance must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-10 * max(1.0, np.abs(Q).max()):
            raise ValueError("birth covariance must be positive semidefinite")
        if self.expected_births_per_scan < 0:
            raise ValueError("expected_births_per_scan must be >= 0")

    @cached_property
    def factor(self) -> np.ndarray:
        """Matrix A with A @ A.T == covariance; works for singular covariances."""
        vals, vecs = np.linalg.eigh(np.asarray(self.covariance, dtype=float))
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass(frozen=True)
class ClutterModel:
    """Poisson clutter, uniform over a (bearing, range) box."""

    rate: float = 0.0
    bearing_limits: tuple[float, float] = (-np.pi / 2, np.pi / 2)
    range_limits: tuple[float, float] = (0.0, 200.0)

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("clutter rate must be >= 0")
        b0, b1 = self.bearing_limits
        r0, r1 = self.range_limits
        if not (b1 > b0 and r1 > r0):
            raise ValueError("clutter region must be nonempty")

    @property
    def volume(self) -> float:
        b0, b1 = self.bearing_limits
        r0, r1 = self.range_limits
        return (b1 - b0) * (r1 - r0)


def cv_transition(state, motion: MotionModel, rng: np.random.Generator | None = None):
    """Propagate one state (shape (4,)) or a batch (shape (n, 4)) by one period.

    ``rng=None`` gives the noiseless transition.
    """
    state = np.asarray(state, dtype=float)
    out = state @ motion.F.T
    if rng is not None:
        w = rng.standard_normal(state.shape[:-1] + (2,)) * (motion.sigma_wx, motion.sigma_wy)
        out = out + w @ motion.G.T
    return out


def measure(state, sensor: SensorModel, rng: np.random.Generator | None = None):
    """Range and bearing of state(s) as seen from the sensor, optionally noisy.

    Returns shape (2,) or (n, 2).  A target exactly at the sensor has bearing 0.
    """
    state = np.asarray(state, dtype=float)
    dx = state[..., 0] - sensor.position[0]
    dy = state[..., 2] - sensor.position[1]
    rng_ = np.hypot(dx, dy)
    brg = np.arctan2(dy, dx)  # atan2(0, 0) == 0
    if rng is not None:
        noise = rng.standard_normal(rng_.shape + (2,))
        rng_ = rng_ + sensor.sigma_range * noise[..., 0]
        brg = brg + sensor.sigma_bearing * noise[..., 1]
    return np.stack([rng_, wrap_angle(brg)], axis=-1)


def likelihood(z, state, sensor: SensorModel):
    """Measurement density g(z | x).

    ``z`` has shape (..., m, 2) or (2,) and ``state`` (n, 4) or (4,); the
    result broadcasts to (n, m) for batched inputs.
    """
    pred = measure(state, sensor)
    z = np.asarray(z, dtype=float)
    if pred.ndim == 2 and z.ndim == 2:
        pred = pred[:, None, :]
    dr = (z[..., 0] - pred[..., 0]) / sensor.sigma_range
    db = wrap_angle(z[..., 1] - pred[..., 1]) / sensor.sigma_bearing
    norm = 1.0 / (2.0 * np.pi * sensor.sigma_range * sensor.sigma_bearing)
    return norm * np.exp(-0.5 * (dr * dr + db * db))


def sample_births(n: int, birth: BirthModel, rng: np.random.Generator) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return np.empty((0, STATE_DIM))
    return np.asarray(birth.mean) + rng.standard_normal((n, STATE_DIM)) @ birth.factor.T


def in_region(z, clutter: ClutterModel):
    z = np.asarray(z, dtype=float)
    b0, b1 = clutter.bearing_limits
    r0, r1 = clutter.range_limits
    return (z[..., 1] >= b0) & (z[..., 1] <= b1) & (z[..., 0] >= r0) & (z[..., 0] <= r1)


def clutter_intensity(z, clutter: ClutterModel):
    """Clutter intensity kappa(z) = rate / V inside the region, 0 outside."""
    return np.where(in_region(z, clutter), clutter.rate / clutter.volume, 0.0)


def generate_clutter(clutter: ClutterModel, rng: np.random.Generator) -> np.ndarray:
    n = rng.poisson(clutter.rate) if clutter.rate > 0 else 0
    u = rng.random((n, 2))
    b0, b1 = clutter.bearing_limits
    r0, r1 = clutter.range_limits
    return np.column_stack([r0 + (r1 - r0) * u[:, 0], b0 + (b1 - b0) * u[:, 1]])


@dataclass(frozen=True)
class FilterModels:
    """Bundle of everything the filter needs to know about the world."""

    motion: MotionModel = field(default_factory=MotionModel)
    sensor: SensorModel = field(default_factory=SensorModel)
    birth: BirthModel = field(default_factory=BirthModel)
    clutter: ClutterModel = field(default_factory=ClutterModel)
    detection_probability: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.detection_probability <= 1.0:
            raise ValueError("detection_probability must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Detections of one scan; row ``i`` carries label ``i + 1``."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).reshape(-1, MEAS_DIM)
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return self.z.shape[0]

    def __iter__(self):
        for i, (r, b) in enumerate(self.z, start=1):
            yield Measurement(float(r), float(b), i)

    @property
    def labels(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

"""Particle PHD filter with per-measurement weight decomposition.

The update splits every particle weight into one sub-weight per measurement
plus an "undetected" slot.  Summing a measurement's sub-weights over the
population gives the mass that measurement explains, which is what state
extraction ranks on; each extracted estimate therefore carries the label of
the measurement that produced it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .models import (
    STATE_DIM,
    BirthModel,
    ClutterModel,
    FilterModels,
    MeasurementSet,
    MotionModel,
    SensorModel,
    StateVector,
    clutter_intensity,
    cv_transition,
    likelihood,
    sample_births,
)

log = logging.getLogger(__name__)


class Particle:
    """Read-only view of one row of a :class:`ParticlePopulation`."""

    __slots__ = ("_pop", "_i")

    def __init__(self, pop: "ParticlePopulation", i: int):
        self._pop = pop
        self._i = i

    @property
    def state(self) -> StateVector:
        return StateVector(*map(float, self._pop.states[self._i]))

    @property
    def weight(self) -> float:
        return float(self._pop.weights[self._i])

    @property
    def sub_weights(self) -> np.ndarray | None:
        sw = self._pop.sub_weights
        return None if sw is None else sw[self._i]


@dataclass
class ParticlePopulation:
    """Weighted particles stored column-wise.

    ``sub_weights`` is ``None`` until an update has run.  When set it has one
    row per particle and ``M_k + 1`` columns: column 0 is the undetected slot
    and column ``p`` belongs to measurement label ``p``.
    """

    states: np.ndarray
    weights: np.ndarray
    per_target_count: int
    sub_weights: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, STATE_DIM)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.states.shape[0] != self.weights.shape[0]:
            raise ValueError("states and weights disagree in length")
        if self.per_target_count < 1:
            raise ValueError("per_target_count must be >= 1")

    def __len__(self) -> int:
        return self.weights.shape[0]

    def __getitem__(self, i: int) -> Particle:
        if not -len(self) <= i < len(self):
            raise IndexError(i)
        return Particle(self, i % len(self))

    def __iter__(self):
        return (Particle(self, i) for i in range(len(self)))

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def copy(self) -> "ParticlePopulation":
        return ParticlePopulation(
            self.states.copy(), self.weights.copy(), self.per_target_count,
            None if self.sub_weights is None else self.sub_weights.copy())


@dataclass(frozen=True)
class LocalEstimate:
    state: StateVector
    label: int
    group: int
    mass: float


def init_population(n: int, birth: BirthModel, per_target_count: int,
                    rng: np.random.Generator) -> ParticlePopulation:
    """``n`` particles from the birth density, each weighted ``1/n``."""
    if n < 1:
        raise ValueError("need at least one particle")
    return ParticlePopulation(sample_births(n, birth, rng), np.full(n, 1.0 / n), per_target_count)


def predict(population: ParticlePopulation, motion: MotionModel, birth: BirthModel,
            n_birth: int, rng: np.random.Generator) -> ParticlePopulation:
    """Move survivors through the transition prior and append ``n_birth`` newborns.

    With the prior as proposal the survivor weight is just scaled by the
    survival probability; newborns share the birth mass equally.
    """
    if n_birth < 0:
        raise ValueError("n_birth must be >= 0")
    if n_birth == 0 and birth.expected_births_per_scan > 0:
        raise ValueError("n_birth=0 would drop a nonzero birth mass")
    moved = cv_transition(population.states, motion, rng)
    born = sample_births(n_birth, birth, rng)
    w_born = np.full(n_birth, birth.expected_births_per_scan / n_birth) if n_birth else np.empty(0)
    return ParticlePopulation(
        np.concatenate([moved, born]),
        np.concatenate([motion.survival_probability * population.weights, w_born]),
        population.per_target_count,
    )


def detection_terms(population: ParticlePopulation, Z: MeasurementSet, sensor: SensorModel,
                    p_D: float) -> np.ndarray:
    """psi(z_p | x_i) = p_D * g(z_p | x_i) as an (n_particles, n_meas) array."""
    if len(Z) == 0 or len(population) == 0:
        return np.zeros((len(population), len(Z)))
    return p_D * likelihood(Z.z, population.states, sensor)


def compute_normalizers(population: ParticlePopulation, Z: MeasurementSet, sensor: SensorModel,
                        clutter: ClutterModel, p_D: float, psi: np.ndarray | None = None) -> np.ndarray:
    """C(z_p) = sum_i psi(z_p | x_i) w_i for every measurement, shape (M_k,).

    ``clutter`` is unused here; it is accepted so the update stages share a
    calling convention.
    """
    if psi is None:
        psi = detection_terms(population, Z, sensor, p_D)
    return population.weights @ psi


def update_stphd(population: ParticlePopulation, Z: MeasurementSet, normalizers: np.ndarray,
                 sensor: SensorModel, clutter: ClutterModel, p_D: float,
                 psi: np.ndarray | None = None) -> ParticlePopulation:
    """Decompose each predicted weight into per-measurement sub-weights.

    Sub-weight for label p is ``psi_ip / (kappa_p + C_p) * w_i``; the
    undetected slot is ``(1 - p_D) * w_i``; the new weight is their sum.
    """
    if psi is None:
        psi = detection_terms(population, Z, sensor, p_D)
    w = population.weights
    denom = clutter_intensity(Z.z, clutter) + np.asarray(normalizers, dtype=float)
    # denom == 0 forces C == 0, so every particle with psi > 0 has zero weight
    # and contributes nothing; define the ratio as 0 there.
    safe = np.where(denom > 0, denom, 1.0)
    gain = np.where(denom > 0, psi / safe, 0.0)
    sub = np.empty((len(population), len(Z) + 1))
    sub[:, 0] = (1.0 - p_D) * w
    sub[:, 1:] = gain * w[:, None]
    return ParticlePopulation(population.states, sub.sum(axis=1), population.per_target_count, sub)


def round_half_away(x: float) -> int:
    return int(np.sign(x) * np.floor(abs(x) + 0.5))


def estimate_cardinality(population: ParticlePopulation) -> tuple[float, int]:
    mass = population.mass if len(population) else 0.0
    return mass, max(round_half_away(mass), 0)


def systematic_indices(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Offspring indices from one uniform draw and ``n`` evenly spaced pointers."""
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    pointers = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(cdf, pointers, side="right")
    return np.minimum(idx, len(weights) - 1)


def resample(population: ParticlePopulation, n: int, rng: np.random.Generator) -> ParticlePopulation:
    """Systematic resampling to exactly ``n`` particles of weight ``mass / n``.

    A massless population resamples to an empty one.
    """
    if n < 1:
        raise ValueError("target particle count must be >= 1")
    mass = population.mass if len(population) else 0.0
    if not mass > 0:
        return ParticlePopulation(np.empty((0, STATE_DIM)), np.empty(0), population.per_target_count)
    idx = systematic_indices(population.weights, n, rng)
    return ParticlePopulation(population.states[idx], np.full(n, mass / n), population.per_target_count)


def extract_states_stphd(population: ParticlePopulation, Z: MeasurementSet,
                         group: int = 1) -> list[LocalEstimate]:
    """Labeled estimates for the measurements that explain the most mass.

    The number of estimates is the rounded total mass, capped at the number
    of measurements.  Ties in explained mass go to the smaller label.  The
    result is ordered by label.
    """
    if population.sub_weights is None:
        raise ValueError("population has not been updated")
    _, count = estimate_cardinality(population)
    if count == 0 or len(Z) == 0:
        return []
    if count > len(Z):
        log.debug("estimated %d targets but only %d measurements; truncating", count, len(Z))
        count = len(Z)
    sub = population.sub_weights[:, 1:]
    explained = sub.sum(axis=0)
    # stable sort on -mass keeps the smaller label first among equals
    chosen = np.sort(np.argsort(-explained, kind="stable")[:count])
    out = []
    for p in chosen:
        col = sub[:, p]
        total = explained[p]
        if not total > 0:
            continue
        state = (col / total) @ population.states
        out.append(LocalEstimate(StateVector(*map(float, state)), int(p) + 1, group, float(total)))
    return out


def step_serial(population: ParticlePopulation, Z: MeasurementSet, models: FilterModels,
                rng: np.random.Generator, group: int = 1) -> tuple[ParticlePopulation, list[LocalEstimate]]:
    """One full scan: predict, update, extract, resample.

    Uses ``per_target_count`` birth particles per scan and resamples to
    ``max(count, 1) * per_target_count`` particles.  A population whose mass
    vanished is re-seeded with ``per_target_count`` birth particles of weight
    ``1 / per_target_count`` so that it can pick targets up again.
    """
    R = population.per_target_count
    predicted = predict(population, models.motion, models.birth, R, rng)
    p_D = models.detection_probability
    psi = detection_terms(predicted, Z, models.sensor, p_D)
    C = compute_normalizers(predicted, Z, models.sensor, models.clutter, p_D, psi=psi)
    updated = update_stphd(predicted, Z, C, models.sensor, models.clutter, p_D, psi=psi)
    estimates = extract_states_stphd(updated, Z, group=group)
    _, count = estimate_cardinality(updated)
    resampled = resample(updated, max(count, 1) * R, rng)
    if len(resampled) == 0:
        resampled = init_population(R, models.birth, R, rng)
    return resampled, estimates

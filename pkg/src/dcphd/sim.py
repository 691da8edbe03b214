"""Ground truth, synthetic measurements and Monte-Carlo experiment runs."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import FilterConfig, ScenarioConfig
from .dcp import ProcessEnsemble, group_seeds, init_ensemble, step_ensemble
from .metrics import OspaParams, RunStats, ospa
from .models import MeasurementSet, StateVector, cv_transition, generate_clutter, measure
from .phd import init_population, step_serial


@dataclass
class GroundTruth:
    """``scans[k]`` lists ``(track id, state)`` for every track alive at scan k."""

    scans: list[list[tuple[int, StateVector]]]

    def __len__(self) -> int:
        return len(self.scans)

    def counts(self) -> list[int]:
        return [len(s) for s in self.scans]

    def positions(self, k: int) -> np.ndarray:
        return np.array([[s.x, s.y] for _, s in self.scans[k]]).reshape(-1, 2)

    def states(self, k: int) -> np.ndarray:
        return np.array([list(s) for _, s in self.scans[k]]).reshape(-1, 4)


def generate_truth(config: ScenarioConfig, rng: np.random.Generator | None = None) -> GroundTruth:
    """Propagate each scripted track from its birth scan until its death scan.

    Uses ``config.truth_motion``, which equals the filter's motion model
    unless the scenario sets its own truth process noise.  Tracks are
    processed in order; the stream is seeded from ``truth_seed`` unless
    ``rng`` is given.
    """
    if rng is None:
        rng = np.random.default_rng(config.truth_seed)
    scans: list[list[tuple[int, StateVector]]] = [[] for _ in range(config.scan_count)]
    motion = config.truth_motion
    for tid, track in enumerate(config.tracks):
        x = np.asarray(track.initial, dtype=float)
        for k in range(track.birth, track.death):
            if k > track.birth:
                x = cv_transition(x, motion, rng)
            scans[k].append((tid, StateVector(*map(float, x))))
    return GroundTruth(scans)


def generate_measurements(truth: GroundTruth, config: ScenarioConfig, k: int,
                          rng: np.random.Generator) -> MeasurementSet:
    """Detections of the live tracks plus clutter, shuffled, labeled 1..M_k."""
    models = config.models
    states = truth.states(k)
    detected = rng.random(len(states)) < models.detection_probability
    z_t = measure(states[detected], models.sensor, rng) if detected.any() else np.empty((0, 2))
    z_c = generate_clutter(models.clutter, rng)
    z = np.concatenate([z_t.reshape(-1, 2), z_c])
    return MeasurementSet(z[rng.permutation(len(z))])


def generate_scan_sets(truth: GroundTruth, config: ScenarioConfig, rng: np.random.Generator) -> list[MeasurementSet]:
    return [generate_measurements(truth, config, k, rng) for k in range(len(truth))]


# -- filters behind one interface ---------------------------------------------


class SerialTracker:
    """Single-population particle PHD filter with N particles.

    With the same seed it consumes randomness exactly like group 1 of a
    one-group ensemble.
    """

    def __init__(self, config: ScenarioConfig, seed, particles: int, per_target: int):
        self.models = config.models
        self.rng = np.random.default_rng(group_seeds(seed, 1)[0])
        self.population = init_population(particles, self.models.birth, per_target, self.rng)

    def step(self, Z: MeasurementSet) -> list[tuple[int, StateVector]]:
        self.population, ests = step_serial(self.population, Z, self.models, self.rng)
        return [(e.label, e.state) for e in ests]

    def close(self):
        pass


class DistributedTracker:
    """K-group ensemble; groups stepped inline, on threads, or in processes."""

    def __init__(self, config: ScenarioConfig, seed, fc: FilterConfig):
        self.models = config.models
        K, M, L, R = fc.groups, fc.per_group_particles, fc.exchange, fc.particles_per_target
        self._executor = None
        self._proc = None
        if fc.backend == "process":
            self._proc = ProcessEnsemble(K, M, L, self.models, seed, per_target_count=R)
        else:
            self.ensemble = init_ensemble(K, M, L, self.models, seed, per_target_count=R)
            if fc.backend == "thread" and K > 1:
                self._executor = ThreadPoolExecutor(max_workers=K)

    def step(self, Z: MeasurementSet) -> list[tuple[int, StateVector]]:
        if self._proc is not None:
            g = self._proc.step(Z)
        else:
            g = step_ensemble(self.ensemble, Z, self.models, self._executor)
        return list(zip(g.labels, g.states))

    def close(self):
        if self._executor is not None:
            self._executor.shutdown()
        if self._proc is not None:
            self._proc.close()


def make_tracker(config: ScenarioConfig, seed, fc: FilterConfig | None = None):
    """Build the tracker described by ``fc`` (default: the config's filter).

    The serial filter gets the same total budget as the ensemble: all
    ``particles`` and ``groups * particles_per_target`` per target.
    """
    fc = fc or config.filter
    if fc.kind == "serial":
        return SerialTracker(config, seed, fc.particles, fc.groups * fc.particles_per_target)
    return DistributedTracker(config, seed, fc)


def run_seeds(seed: int, runs: int) -> list[tuple[np.random.SeedSequence, np.random.SeedSequence]]:
    """(measurement stream, filter master seed) for every Monte-Carlo run."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(runs):
        meas, filt = child.spawn(2)
        out.append((meas, filt))
    return out


def run_once(config: ScenarioConfig, truth: GroundTruth, scans: list[MeasurementSet], filter_seed,
             fc: FilterConfig | None = None) -> RunStats:
    params = OspaParams(config.ospa_p, config.ospa_c)
    tracker = make_tracker(config, filter_seed, fc)
    try:
        outputs = []
        t0 = time.perf_counter()
        for Z in scans:
            outputs.append(tracker.step(Z))
        wall = time.perf_counter() - t0
    finally:
        tracker.close()
    per_scan_ospa, est_n, records = [], [], []
    for k, ests in enumerate(outputs):
        est_pos = np.array([[s.x, s.y] for _, s in ests]).reshape(-1, 2)
        per_scan_ospa.append(ospa(truth.positions(k), est_pos, params))
        est_n.append(len(ests))
        records.append([(label, s.x, s.y) for label, s in ests])
    return RunStats(per_scan_ospa, truth.counts(), est_n, wall, records)


def run_experiment(config: ScenarioConfig, filter: str | FilterConfig | None = None,
                   mc_runs: int | None = None) -> list[RunStats]:
    """Independent end-to-end runs sharing one ground truth.

    Run ``i`` draws its measurements and filter randomness from streams
    derived from ``(config.seed, i)``, so different filters evaluated with
    the same config see identical measurement sequences.
    """
    if isinstance(filter, str):
        fc = replace(config.filter, kind=filter)
    else:
        fc = filter or config.filter
    truth = generate_truth(config)
    runs = []
    for meas_seed, filt_seed in run_seeds(config.seed, mc_runs or config.runs):
        scans = generate_scan_sets(truth, config, np.random.default_rng(meas_seed))
        runs.append(run_once(config, truth, scans, filt_seed, fc))
    return runs


def truth_rows(truth: GroundTruth):
    """``(scan, track, x, vx, y, vy)`` for every live track, scan-major."""
    for k, live in enumerate(truth.scans):
        for tid, s in live:
            yield (k, tid, *s)


def measurement_rows(config: ScenarioConfig, mc_runs: int | None = None):
    """``(run, scan, label, range, bearing)`` for the measurements each run sees.

    Regenerates the same streams as :func:`run_experiment`.
    """
    truth = generate_truth(config)
    for i, (meas_seed, _) in enumerate(run_seeds(config.seed, mc_runs or config.runs)):
        for k, Z in enumerate(generate_scan_sets(truth, config, np.random.default_rng(meas_seed))):
            for m in Z:
                yield (i, k, m.label, float(m.range), float(m.bearing))


def settled_scans(config: ScenarioConfig, min_age: int = 5) -> np.ndarray:
    """Boolean mask of scans where every live track is at least ``min_age`` scans old."""
    mask = np.ones(config.scan_count, dtype=bool)
    for t in config.tracks:
        mask[t.birth:min(t.birth + min_age, t.death)] = False
    return mask

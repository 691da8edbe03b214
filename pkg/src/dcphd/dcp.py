"""Distributed particle PHD filter over K particle groups.

Each group runs the full particle PHD recursion on its own particles against
the whole measurement set.  After every scan a central unit fuses the
groups' labeled estimates by majority vote on measurement labels, then the
groups pass a few particles around a ring (group j feeds j+1, the last feeds
the first).

Group stepping is embarrassingly parallel: a group touches only its own
population and random stream.  Fusion and exchange are barriers.  Exchange
draws its random choices from the groups' own streams in a fixed order, so
results never depend on how the group steps were scheduled.
"""
from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .models import FilterModels, MeasurementSet, StateVector
from .phd import LocalEstimate, ParticlePopulation, init_population, step_serial


def group_seeds(master_seed, K: int) -> list[np.random.SeedSequence]:
    """Independent child streams; child ``j`` does not depend on ``K``."""
    root = master_seed if isinstance(master_seed, np.random.SeedSequence) else np.random.SeedSequence(master_seed)
    return [np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (j,)) for j in range(K)]


@dataclass
class GroupState:
    id: int
    population: ParticlePopulation
    rng: np.random.Generator


@dataclass
class Ensemble:
    groups: list[GroupState]
    exchange_count: int
    per_group_particles: int

    def __post_init__(self):
        if not self.groups:
            raise ValueError("an ensemble needs at least one group")
        if not 0 <= self.exchange_count < self.per_group_particles / 2:
            raise ValueError("exchange count L must satisfy 0 <= L < M/2")

    @property
    def K(self) -> int:
        return len(self.groups)

    @property
    def total_particles(self) -> int:
        return sum(len(g.population) for g in self.groups)


@dataclass
class GlobalEstimate:
    states: list[StateVector] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)
    supporting_groups: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)


def init_ensemble(K: int, M: int, L: int, models: FilterModels, master_seed,
                  per_target_count: int = 200) -> Ensemble:
    """K groups of M birth-density particles, weight 1/M each."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if M < 2:
        raise ValueError("M must be >= 2")
    if not 0 <= L < M / 2:
        raise ValueError(f"exchange count L={L} must satisfy 0 <= L < M/2 = {M / 2}")
    groups = []
    for j, seq in enumerate(group_seeds(master_seed, K), start=1):
        rng = np.random.default_rng(seq)
        groups.append(GroupState(j, init_population(M, models.birth, per_target_count, rng), rng))
    return Ensemble(groups, L, M)


def step_group(group: GroupState, Z: MeasurementSet, models: FilterModels) -> list[LocalEstimate]:
    group.population, estimates = step_serial(group.population, Z, models, group.rng, group=group.id)
    return estimates


def _hop_count(L: int, n_src: int, n_dst: int) -> int:
    # populations smaller than 2L send floor(size/2) - 1 couples instead
    n = min(n_src, n_dst)
    return L if n >= 2 * L else max(n // 2 - 1, 0)


def exchange_plan(sizes: list[int], L: int) -> list[int]:
    """Number of couples sent on each ring hop ``j -> j+1 (mod K)``."""
    K = len(sizes)
    if K == 1 or L == 0:
        return [0] * K
    return [_hop_count(L, sizes[j], sizes[(j + 1) % K]) for j in range(K)]


def take_couples(group: GroupState, n: int) -> tuple[np.ndarray, np.ndarray]:
    pop = group.population
    idx = group.rng.choice(len(pop), size=n, replace=False)
    return pop.states[idx].copy(), pop.weights[idx].copy()


def put_couples(group: GroupState, states: np.ndarray, weights: np.ndarray) -> None:
    pop = group.population
    slots = group.rng.choice(len(pop), size=len(weights), replace=False)
    pop.states[slots] = states
    pop.weights[slots] = weights


def exchange(ensemble: Ensemble) -> Ensemble:
    """Ring exchange of particle-weight couples, computed from a snapshot.

    Every group first picks the couples it sends, then every group overwrites
    random slots with what its predecessor sent.  Counts are unchanged.
    """
    K = ensemble.K
    plan = exchange_plan([len(g.population) for g in ensemble.groups], ensemble.exchange_count)
    if not any(plan):
        return ensemble
    outgoing = [take_couples(g, n) for g, n in zip(ensemble.groups, plan)]
    for j, g in enumerate(ensemble.groups):
        states, weights = outgoing[(j - 1) % K]
        put_couples(g, states, weights)
    return ensemble


def fuse(local_estimates: list[LocalEstimate], K: int) -> GlobalEstimate:
    """Majority vote on measurement labels.

    A label survives when strictly more than K/2 distinct groups reported it;
    its global state is the plain mean of those groups' states.  If a group
    reported the same label twice, the estimate with larger mass is used.
    """
    buckets: dict[int, dict[int, LocalEstimate]] = {}
    for est in local_estimates:
        per_group = buckets.setdefault(est.label, {})
        prev = per_group.get(est.group)
        if prev is None or est.mass > prev.mass:
            per_group[est.group] = est
    out = GlobalEstimate()
    for label in sorted(buckets):
        supporters = buckets[label]
        if len(supporters) > K / 2:
            states = np.array([supporters[g].state for g in sorted(supporters)])
            out.states.append(StateVector(*map(float, states.mean(axis=0))))
            out.labels.append(label)
            out.supporting_groups.append(len(supporters))
    return out


def step_ensemble(ensemble: Ensemble, Z: MeasurementSet, models: FilterModels,
                  executor: Executor | None = None) -> GlobalEstimate:
    """Local steps (optionally concurrent), then fusion, then exchange."""
    if executor is None:
        local = [step_group(g, Z, models) for g in ensemble.groups]
    else:
        local = list(executor.map(lambda g: step_group(g, Z, models), ensemble.groups))
    fused = fuse([e for ests in local for e in ests], ensemble.K)
    exchange(ensemble)
    return fused


# -- process backend ---------------------------------------------------------
#
# One persistent worker process per group holds that group's state, which is
# how the groups would live on separate processing elements.  The parent acts
# as the central unit: it broadcasts each scan, gathers labeled estimates and
# routes exchanged couples around the ring.  Incoming couples ride along with
# the next scan's step message, which saves one round trip per scan.  Every worker performs exactly the
# same random draws as the in-process path, so results are identical.


def _worker(conn, group_id: int, seed: np.random.SeedSequence, M: int, R: int, models: FilterModels):
    rng = np.random.default_rng(seed)
    group = GroupState(group_id, init_population(M, models.birth, R, rng), rng)
    while True:
        cmd, arg = conn.recv()
        if cmd == "step":
            incoming, Z = arg
            # couples from the previous exchange land before the next scan
            if incoming is not None:
                put_couples(group, *incoming)
            if Z is None:
                conn.send(None)
                continue
            ests = step_group(group, Z, models)
            conn.send((ests, len(group.population)))
        elif cmd == "take":
            conn.send(take_couples(group, arg))
        elif cmd == "dump":
            conn.send(group.population)
        elif cmd == "close":
            conn.close()
            return


class ProcessEnsemble:
    """Ensemble whose groups run in dedicated worker processes."""

    def __init__(self, K: int, M: int, L: int, models: FilterModels, master_seed,
                 per_target_count: int = 200, start_method: str | None = None):
        if K < 1 or M < 2 or not 0 <= L < M / 2:
            raise ValueError("need K >= 1, M >= 2 and 0 <= L < M/2")
        self.K, self.per_group_particles, self.exchange_count = K, M, L
        if start_method is None:
            start_method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
        ctx = mp.get_context(start_method)
        self._conns, self._procs = [], []
        for j, seq in enumerate(group_seeds(master_seed, K), start=1):
            parent, child = ctx.Pipe()
            p = ctx.Process(target=_worker, args=(child, j, seq, M, per_target_count, models), daemon=True)
            p.start()
            child.close()
            self._conns.append(parent)
            self._procs.append(p)
        self._sizes = [M] * K
        self._pending = [None] * K

    def step(self, Z: MeasurementSet) -> GlobalEstimate:
        replies = self._broadcast_step(Z)
        self._sizes = [n for _, n in replies]
        fused = fuse([e for ests, _ in replies for e in ests], self.K)
        self._exchange()
        return fused

    def _broadcast_step(self, Z):
        pending, self._pending = self._pending, [None] * self.K
        for c, incoming in zip(self._conns, pending):
            c.send(("step", (incoming, Z)))
        return [c.recv() for c in self._conns]

    def _exchange(self):
        plan = exchange_plan(self._sizes, self.exchange_count)
        if not any(plan):
            return
        for c, n in zip(self._conns, plan):
            c.send(("take", n))
        outgoing = [c.recv() for c in self._conns]
        self._pending = [outgoing[(j - 1) % self.K] for j in range(self.K)]

    def populations(self) -> list[ParticlePopulation]:
        if any(p is not None for p in self._pending):
            self._broadcast_step(None)
        for c in self._conns:
            c.send(("dump", None))
        return [c.recv() for c in self._conns]

    def close(self):
        for c, p in zip(self._conns, self._procs):
            try:
                c.send(("close", None))
            except (BrokenPipeError, OSError):
                pass
            p.join(timeout=5)
            if p.is_alive():
                p.terminate()
        self._conns, self._procs = [], []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

"""OSPA miss distance, cardinality series and Monte-Carlo aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    p: float = 1.0
    c: float = 100.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("OSPA order p must be >= 1")
        if not self.c > 0:
            raise ValueError("OSPA cutoff c must be > 0")


def _canonical(points) -> np.ndarray:
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    return P[np.lexsort((P[:, 1], P[:, 0]))]


def ospa(X, Y, params: OspaParams = OspaParams()) -> float:
    """OSPA distance between two sets of 2-D positions.

    Uses the exact optimal assignment on the cut-off cost matrix.  Two empty
    sets are at distance 0.
    """
    X = _canonical(X)
    Y = _canonical(Y)
    m, n = len(X), len(Y)
    # a canonical role for each set makes the result exactly symmetric
    if m > n or (m == n and tuple(X.ravel()) > tuple(Y.ravel())):
        X, Y, m, n = Y, X, n, m
    if n == 0:
        return 0.0
    p, c = params.p, params.c
    total = c ** p * (n - m)
    if m:
        d = np.sqrt(((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=-1))
        cost = np.minimum(d, c) ** p
        rows, cols = linear_sum_assignment(cost)
        total += cost[rows, cols].sum()
    return float(min((total / n) ** (1.0 / p), c))


def cardinality_series(truth_counts, estimates) -> tuple[np.ndarray, np.ndarray]:
    """Per-scan (true count, estimated count) as aligned integer arrays.

    ``estimates`` is a per-scan sequence of estimate collections.
    """
    true_n = np.asarray([int(n) for n in truth_counts], dtype=int)
    est_n = np.asarray([len(e) for e in estimates], dtype=int)
    if true_n.shape != est_n.shape:
        raise ValueError("truth and estimates cover different numbers of scans")
    return true_n, est_n


@dataclass
class RunStats:
    ospa: list[float]
    true_n: list[int]
    est_n: list[int]
    wall_time: float
    estimates: list[list[tuple[int, float, float]]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not len(self.ospa) == len(self.true_n) == len(self.est_n):
            raise ValueError("per-scan series must have equal length")

    @property
    def mean_ospa(self) -> float:
        return float(np.mean(self.ospa)) if self.ospa else 0.0


def _mean_std(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0


def aggregate(runs: list[RunStats], serial_time: float | None = None) -> dict:
    """Mean and sample std of per-run mean OSPA, plus timing.

    When ``serial_time`` is given the summary also carries the speedup
    ``serial_time / mean wall time``.
    """
    if not runs:
        raise ValueError("nothing to aggregate")
    mean_ospa, std_ospa = _mean_std([r.mean_ospa for r in runs])
    times = [r.wall_time for r in runs]
    mean_time = float(np.mean(times))
    summary = {
        "runs": len(runs),
        "mean_ospa": mean_ospa,
        "std_ospa": std_ospa,
        "mean_time": mean_time,
        "median_time": float(np.median(times)),
        "mean_card_error": float(np.mean([np.mean(np.abs(np.subtract(r.est_n, r.true_n))) for r in runs])),
    }
    if serial_time is not None:
        summary["speedup"] = speedup(serial_time, mean_time)
    return summary


def speedup(serial_time: float, distributed_time: float) -> float:
    return serial_time / distributed_time

"""Scenario and filter configuration: YAML schema, overrides, validation.

Every problem found in a config file is reported as a :class:`ConfigError`
that names the offending key and, when it came from a file, the line it is
on.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .models import BirthModel, ClutterModel, FilterModels, MotionModel, SensorModel

FILTER_KINDS = ("serial", "dcp")
BACKENDS = ("inline", "thread", "process")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None, source: str | None = None):
        self.key, self.line, self.source = key, line, source
        where = ""
        if source:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        what = f"{key}: " if key else ""
        super().__init__(f"{where}{what}{message}")


@dataclass(frozen=True)
class Track:
    initial: tuple[float, float, float, float]
    birth: int
    death: int


@dataclass(frozen=True)
class FilterConfig:
    kind: str = "dcp"
    particles: int = 2000
    groups: int = 4
    particles_per_target: int = 200
    exchange: int = 50
    backend: str = "inline"

    @property
    def per_group_particles(self) -> int:
        return self.particles // self.groups


@dataclass(frozen=True)
class ScenarioConfig:
    scan_count: int
    tracks: tuple[Track, ...]
    models: FilterModels
    truth_motion: MotionModel
    truth_seed: int
    seed: int
    runs: int
    filter: FilterConfig
    ospa_p: float = 1.0
    ospa_c: float = 100.0
    raw: dict | None = None

    @property
    def clutter_rate(self) -> float:
        return self.models.clutter.rate

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# -- loading -----------------------------------------------------------------


def _line_index(node, path=(), out=None):
    """Map dotted key paths to 1-based source lines from a composed YAML node."""
    if out is None:
        out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[".".join(p)] = k.start_mark.line + 1
            _line_index(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (str(i),)
            out[".".join(p)] = v.start_mark.line + 1
            _line_index(v, p, out)
    return out


def default_config_text() -> str:
    return resources.files("dcphd").joinpath("data/default.yaml").read_text()


def load_raw(path: str | Path | None) -> tuple[dict, dict, str]:
    """Parse a YAML file into (tree, line index, source name)."""
    if path is None:
        text, source = default_config_text(), "<default>"
    else:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", source=source) from exc
    try:
        node = yaml.compose(text)
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"malformed YAML ({getattr(exc, 'problem', exc)})", line=line, source=source) from exc
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ConfigError("top level must be a mapping", line=1, source=source)
    return tree, _line_index(node) if node is not None else {}, source


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as YAML scalars."""
    tree = copy.deepcopy(tree)
    for item in overrides:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        parts = key.split(".")
        node = tree
        for part in parts[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
                continue
            node = node.setdefault(part, {})
            if not isinstance(node, (dict, list)):
                raise ConfigError(f"cannot descend into scalar at {part!r}", key=key)
        try:
            parsed = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ConfigError(f"unparseable value {value!r}", key=key) from exc
        if isinstance(node, list):
            node[int(parts[-1])] = parsed
        else:
            node[parts[-1]] = parsed
    return tree


class _Reader:
    def __init__(self, tree: dict, lines: dict, source: str):
        self.tree, self.lines, self.source = tree, lines, source

    def error(self, key: str, message: str):
        # fall back to the closest ancestor that has a recorded line
        parts = key.split(".")
        line = None
        while parts and line is None:
            line = self.lines.get(".".join(parts))
            parts.pop()
        return ConfigError(message, key=key, line=line, source=self.source)

    def section(self, key: str, required: bool = True) -> dict:
        node = self.tree.get(key)
        if node is None:
            if required:
                raise self.error(key, "missing required section")
            return {}
        if not isinstance(node, dict):
            raise self.error(key, "must be a mapping")
        return node

    def get(self, section: dict, prefix: str, name: str, kind, default=...):
        key = f"{prefix}.{name}"
        if section.get(name) is None:
            if default is ...:
                raise self.error(key, "missing required field")
            return default
        value = section[name]
        try:
            if kind is float:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError
                value = float(value)
                if not np.isfinite(value):
                    raise TypeError
            elif kind is int:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise TypeError
            elif kind is str:
                if not isinstance(value, str):
                    raise TypeError
            elif kind == "vec":
                value = tuple(float(v) for v in value)
            elif kind == "mat":
                value = tuple(tuple(float(v) for v in row) for row in value)
        except (TypeError, ValueError):
            label = {float: "a finite number", int: "an integer", str: "a string",
                     "vec": "a list of numbers", "mat": "a list of number lists"}[kind]
            raise self.error(key, f"must be {label}, got {value!r}") from None
        return value


_ALLOWED = {
    "scenario": {"scan_count", "truth_seed", "truth_process_noise", "tracks"},
    "motion": {"T", "sigma_wx", "sigma_wy", "survival_probability"},
    "sensor": {"position", "sigma_range", "sigma_bearing", "detection_probability"},
    "birth": {"mean", "covariance", "expected_births_per_scan"},
    "clutter": {"rate", "bearing_limits", "range_limits"},
    "filter": {"kind", "particles", "groups", "particles_per_target", "exchange", "backend"},
    "experiment": {"runs", "seed"},
    "ospa": {"p", "c"},
}


def build_config(tree: dict, lines: dict | None = None, source: str | None = None) -> ScenarioConfig:
    """Validate a raw config tree and build the typed configuration."""
    r = _Reader(tree, lines or {}, source or "<config>")
    for key in tree:
        if key not in _ALLOWED:
            raise r.error(str(key), "unknown section")
    for sec, allowed in _ALLOWED.items():
        node = tree.get(sec)
        if isinstance(node, dict):
            for k in node:
                if k not in allowed:
                    raise r.error(f"{sec}.{k}", "unknown field")

    sc = r.section("scenario")
    scan_count = r.get(sc, "scenario", "scan_count", int)
    if scan_count < 1:
        raise r.error("scenario.scan_count", "must be >= 1")
    truth_seed = r.get(sc, "scenario", "truth_seed", int, 0)
    truth_noise = r.get(sc, "scenario", "truth_process_noise", "vec", None)
    if truth_noise is not None and (len(truth_noise) != 2 or min(truth_noise) < 0):
        raise r.error("scenario.truth_process_noise", "needs 2 non-negative stds [sigma_wx, sigma_wy]")
    raw_tracks = sc.get("tracks", [])
    if not isinstance(raw_tracks, list):
        raise r.error("scenario.tracks", "must be a list")
    tracks = []
    for i, t in enumerate(raw_tracks):
        prefix = f"scenario.tracks.{i}"
        if not isinstance(t, dict):
            raise r.error(prefix, "each track must be a mapping with initial/birth/death")
        initial = r.get(t, prefix, "initial", "vec")
        if len(initial) != 4:
            raise r.error(f"{prefix}.initial", "needs 4 components [x, vx, y, vy]")
        birth = r.get(t, prefix, "birth", int)
        death = r.get(t, prefix, "death", int)
        if not 0 <= birth < death <= scan_count:
            raise r.error(prefix, f"needs 0 <= birth < death <= scan_count ({birth}, {death}, {scan_count})")
        tracks.append(Track(initial, birth, death))

    def build(key, factory, **kw):
        try:
            return factory(**kw)
        except ValueError as exc:
            raise r.error(key, str(exc)) from None

    m = r.section("motion")
    motion = build("motion", MotionModel,
                   T=r.get(m, "motion", "T", float, 1.0),
                   sigma_wx=r.get(m, "motion", "sigma_wx", float),
                   sigma_wy=r.get(m, "motion", "sigma_wy", float),
                   survival_probability=r.get(m, "motion", "survival_probability", float))
    s = r.section("sensor")
    position = r.get(s, "sensor", "position", "vec", (0.0, 0.0))
    if len(position) != 2:
        raise r.error("sensor.position", "needs 2 components")
    sensor = build("sensor", SensorModel, position=position,
                   sigma_range=r.get(s, "sensor", "sigma_range", float),
                   sigma_bearing=r.get(s, "sensor", "sigma_bearing", float))
    p_D = r.get(s, "sensor", "detection_probability", float, 1.0)
    b = r.section("birth")
    birth = build("birth", BirthModel,
                  mean=r.get(b, "birth", "mean", "vec"),
                  covariance=r.get(b, "birth", "covariance", "mat"),
                  expected_births_per_scan=r.get(b, "birth", "expected_births_per_scan", float))
    c = r.section("clutter")
    b_lim = r.get(c, "clutter", "bearing_limits", "vec", (-np.pi / 2, np.pi / 2))
    r_lim = r.get(c, "clutter", "range_limits", "vec", (0.0, 200.0))
    if len(b_lim) != 2 or len(r_lim) != 2:
        raise r.error("clutter", "limits need exactly 2 values")
    clutter = build("clutter", ClutterModel, rate=r.get(c, "clutter", "rate", float, 0.0),
                    bearing_limits=b_lim, range_limits=r_lim)
    models = build("sensor.detection_probability", FilterModels, motion=motion, sensor=sensor,
                   birth=birth, clutter=clutter, detection_probability=p_D)

    f = r.section("filter")
    fc = FilterConfig(
        kind=r.get(f, "filter", "kind", str, "dcp"),
        particles=r.get(f, "filter", "particles", int, 2000),
        groups=r.get(f, "filter", "groups", int, 4),
        particles_per_target=r.get(f, "filter", "particles_per_target", int, 200),
        exchange=r.get(f, "filter", "exchange", int, None),
        backend=r.get(f, "filter", "backend", str, "inline"),
    )
    if fc.kind not in FILTER_KINDS:
        raise r.error("filter.kind", f"must be one of {FILTER_KINDS}")
    if fc.backend not in BACKENDS:
        raise r.error("filter.backend", f"must be one of {BACKENDS}")
    if fc.groups < 1:
        raise r.error("filter.groups", "must be >= 1")
    if fc.particles % fc.groups:
        raise r.error("filter.particles", f"{fc.particles} particles do not split evenly into {fc.groups} groups")
    M = fc.per_group_particles
    if M < 2:
        raise r.error("filter.particles", "each group needs at least 2 particles")
    if fc.particles_per_target < 1:
        raise r.error("filter.particles_per_target", "must be >= 1")
    if fc.exchange is None:
        fc = FilterConfig(fc.kind, fc.particles, fc.groups, fc.particles_per_target, M // 10, fc.backend)
    if not 0 <= fc.exchange < M / 2:
        raise r.error("filter.exchange",
                      f"exchange count L={fc.exchange} violates the ring-exchange constraint L < M/2 "
                      f"with M={M} particles per group")

    e = r.section("experiment", required=False)
    runs = r.get(e, "experiment", "runs", int, 1)
    if runs < 1:
        raise r.error("experiment.runs", "must be >= 1")
    seed = r.get(e, "experiment", "seed", int, 0)
    if seed < 0:
        raise r.error("experiment.seed", "must be >= 0")

    o = r.section("ospa", required=False)
    p = r.get(o, "ospa", "p", float, 1.0)
    cut = r.get(o, "ospa", "c", float, 100.0)
    if p < 1 or cut <= 0:
        raise r.error("ospa", "need p >= 1 and c > 0")

    truth_motion = motion
    if truth_noise is not None:
        truth_motion = MotionModel(motion.T, truth_noise[0], truth_noise[1], motion.survival_probability)
    return ScenarioConfig(scan_count, tuple(tracks), models, truth_motion, truth_seed, seed, runs, fc,
                          p, cut, raw=copy.deepcopy(tree))


def load_config(path: str | Path | None = None, overrides: list[str] = ()) -> ScenarioConfig:
    tree, lines, source = load_raw(path)
    if overrides:
        tree = apply_overrides(tree, list(overrides))
    return build_config(tree, lines, source)


def with_overrides(config: ScenarioConfig, overrides: list[str]) -> ScenarioConfig:
    return build_config(apply_overrides(config.raw or {}, overrides))

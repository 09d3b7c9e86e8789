"""Experiment configuration: one JSON file describes a reproducible run.

Values resolve with flag > file > default precedence. Validation errors
name the offending field with its dotted path.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .beamsim import DriftSchedule, GeneratorConfig
from .es import EsConfig
from .net import DEFAULT_SCHEDULE, NetworkSpec
from .tuner import SCENARIO_NAMES

OUT_ENV = "LATENT_TUNING_OUT"
DEFAULT_OUT = "runs"


class ConfigError(ValueError):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


@dataclass(frozen=True)
class Seeds:
    data: int = 0
    train: int = 0
    scenario: int = 0
    noise: int = 0


@dataclass(frozen=True)
class EsSettings:
    alpha: float = 0.02
    k: float = 20.0
    dt: float = 1.0
    steps_per_period: int = 50

    def build(self, dim: int) -> EsConfig:
        return EsConfig.for_dim(dim, self.alpha, self.k, self.dt, self.steps_per_period)


@dataclass(frozen=True)
class TuneSettings:
    steps: int = 5000
    snapshot_every: int = 50
    noise: float = 0.0
    scenario: str = "near"
    sample_index: int = 0


@dataclass(frozen=True)
class ScenarioSettings:
    near: float = 1.1
    far: float = 1.5
    jitter: float = 0.1
    n: int = 1000


@dataclass(frozen=True)
class DriftSettings:
    period: float = 20000.0
    input_amplitudes: tuple = (0.0,) * 5
    beam_amplitudes: tuple = (0.0,) * 7
    phases: tuple = (0.0,) * 12

    def build(self) -> DriftSchedule:
        return DriftSchedule(self.period, np.array(self.input_amplitudes),
                             np.array(self.beam_amplitudes), np.array(self.phases))


@dataclass(frozen=True)
class ExperimentConfig:
    n_samples: int = 5000
    batch_size: int = 10
    schedule: tuple = DEFAULT_SCHEDULE
    seeds: Seeds = field(default_factory=Seeds)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    es: EsSettings = field(default_factory=EsSettings)
    tune: TuneSettings = field(default_factory=TuneSettings)
    scenarios: ScenarioSettings = field(default_factory=ScenarioSettings)
    drift: DriftSettings = field(default_factory=DriftSettings)

    def validate(self) -> "ExperimentConfig":
        _check(self.n_samples >= 1, "n_samples", "must be at least 1")
        _check(self.batch_size >= 1, "batch_size", "must be at least 1")
        _check(len(self.schedule) > 0, "schedule", "needs at least one stage")
        for i, stage in enumerate(self.schedule):
            _check(len(stage) == 2 and int(stage[0]) >= 1 and float(stage[1]) > 0,
                   f"schedule[{i}]", "must be [epochs >= 1, learning rate > 0]")
        g, n = self.generator, self.network
        _check(g.input_size == n.input_size, "network.input_size",
               f"is {n.input_size} but generator.input_size is {g.input_size}")
        _check(g.output_size == n.output_size, "network.output_size",
               f"is {n.output_size} but generator.output_size is {g.output_size}")
        _check([p.key for p in g.pairs] == list(n.pairs), "network.pairs",
               f"{list(n.pairs)} differ from generator.pairs {[p.key for p in g.pairs]}")
        _check(self.es.alpha > 0, "es.alpha", "must be positive")
        _check(self.es.k > 0, "es.k", "must be positive")
        try:
            self.es.build(n.latent_dim)
        except ValueError as exc:
            raise ConfigError(f"es: {exc}") from None
        _check(self.tune.steps >= 1, "tune.steps", "must be at least 1")
        _check(self.tune.snapshot_every >= 1, "tune.snapshot_every", "must be at least 1")
        _check(self.tune.noise >= 0, "tune.noise", "must be non-negative")
        _check(self.tune.scenario in SCENARIO_NAMES, "tune.scenario",
               f"must be one of {', '.join(SCENARIO_NAMES)}")
        _check(0 <= self.tune.sample_index < self.scenarios.n, "tune.sample_index",
               f"must lie in [0, {self.scenarios.n})")
        _check(1.0 < self.scenarios.near <= self.scenarios.far, "scenarios",
               "need 1 < near <= far")
        _check(self.scenarios.n >= 2, "scenarios.n", "must be at least 2")
        try:
            self.drift.build()
        except ValueError as exc:
            raise ConfigError(f"drift: {exc}") from None
        return self

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "batch_size": self.batch_size,
            "schedule": [list(s) for s in self.schedule],
            "seeds": asdict(self.seeds),
            "generator": self.generator.to_dict(),
            "network": _listify(self.network.to_dict()),
            "es": asdict(self.es),
            "tune": asdict(self.tune),
            "scenarios": asdict(self.scenarios),
            "drift": _listify(asdict(self.drift)),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        kw = {}
        for key in ("n_samples", "batch_size"):
            if key in d:
                kw[key] = _typed(d[key], int, key)
        if "schedule" in d:
            kw["schedule"] = tuple((int(e), float(lr)) for e, lr in d["schedule"])
        simple = {"seeds": Seeds, "es": EsSettings, "tune": TuneSettings,
                  "scenarios": ScenarioSettings, "drift": DriftSettings}
        for key, typ in simple.items():
            if key in d:
                kw[key] = _section(typ, d[key], key)
        if "generator" in d:
            base = GeneratorConfig().to_dict()
            base.update(d["generator"])
            try:
                kw["generator"] = GeneratorConfig.from_dict(base)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"generator: {exc}") from None
        if "network" in d:
            try:
                kw["network"] = NetworkSpec.from_dict({**NetworkSpec().to_dict(), **d["network"]})
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"network: {exc}") from None
        return cls(**kw).validate()

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Apply dotted-path overrides such as ``{"es.alpha": 0.1}``."""
        d = self.to_dict()
        for path, value in overrides.items():
            if value is None:
                continue
            node = d
            *parents, leaf = path.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config field {path}")
            node[leaf] = value
        return ExperimentConfig.from_dict(d)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the JSON file at ``path`` (if any), then ``overrides``."""
    cfg = ExperimentConfig()
    if path is not None:
        p = Path(path)
        try:
            data = json.loads(p.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {p} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")
        cfg = ExperimentConfig.from_dict(data)
    return cfg.with_overrides(overrides or {})


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def _check(ok: bool, where: str, msg: str) -> None:
    if not ok:
        raise ConfigError(f"{where}: {msg}")


def _typed(v, typ, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (typ is int and v != int(v)):
        raise ConfigError(f"{where}: expected {typ.__name__}, got {v!r}")
    return typ(v)


def _section(typ, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    names = {f.name: f for f in fields(typ)}
    unknown = set(d) - set(names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")
    kw = {}
    default = typ()
    for k, v in d.items():
        ref = getattr(default, k)
        if isinstance(ref, tuple):
            kw[k] = tuple(float(x) for x in v)
        elif isinstance(ref, str):
            if not isinstance(v, str):
                raise ConfigError(f"{where}.{k}: expected a string, got {v!r}")
            kw[k] = v
        else:
            kw[k] = _typed(v, type(ref), f"{where}.{k}")
    return replace(default, **kw)


def _listify(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

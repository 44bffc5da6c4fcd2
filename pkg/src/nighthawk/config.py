"""Flat ``key = value`` configuration files.

Every key maps onto one field of the scenario, metric, optimizer, trigger or
run settings.  Blank lines and ``#`` comments are ignored; an unknown key, a
repeated key or a value of the wrong type raises ``ConfigError``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace

from .bopt import BudgetConfig, SearchSpace
from .controller import TriggerConfig
from .errors import ConfigError, NightHawkError
from .harness import MID_CULVERT, ConfigMode
from .metrics import MetricParams
from .scenesim import ScenarioConfig


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    pose: float = MID_CULVERT
    path_start: float = 0.0
    path_stop: float = 86.0
    path_step: float = 0.25
    modes: tuple = tuple(m.value for m in ConfigMode)
    ae_initial_dt: float = 10.0
    track_k: int = 50
    track_radius: int = 2
    oracle_resolution: int = 101
    sweep_frames: int = 24
    sweep_dt: float = 10.0
    sweep_p_min: float = 0.01
    sweep_p_max: float = 1.0
    bench_k: int = 0
    P: float = 0.5
    dt: float = 10.0
    frames: int = 1


@dataclass(frozen=True)
class Settings:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    metric: MetricParams = field(default_factory=MetricParams)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    space: SearchSpace = field(default_factory=SearchSpace)
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    run: RunSettings = field(default_factory=RunSettings)


# keys that do not share the field name of their target
_ALIASES = {
    "p_min": ("space", "p_bounds", 0),
    "p_max": ("space", "p_bounds", 1),
    "dt_min": ("space", "dt_bounds", 0),
    "dt_max": ("space", "dt_bounds", 1),
    "lengthscale": ("hyper", "lengthscale", None),
    "signal_var": ("hyper", "signal_var", None),
    "noise_var": ("hyper", "noise_var", None),
}


def _field_table():
    table = {}
    for section, cls in (("scenario", ScenarioConfig), ("metric", MetricParams),
                         ("budget", BudgetConfig), ("trigger", TriggerConfig),
                         ("run", RunSettings)):
        for f in fields(cls):
            # the optimizer seed follows the run seed
            if f.name == "hyper" or (section == "budget" and f.name == "seed"):
                continue
            if f.name in table:
                raise AssertionError(f"config key {f.name} is ambiguous")
            table[f.name] = (section, f.name, _default_of(f))
    return table


def _default_of(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


_FIELDS = _field_table()
KNOWN_KEYS = frozenset(_FIELDS) | frozenset(_ALIASES)


def _coerce(key, text, like):
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if isinstance(like, int):
            return int(text, 0)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            parts = [p.strip() for p in text.split(",") if p.strip()]
            if like and isinstance(like[0], str):
                return tuple(parts)
            return tuple(float(p) for p in parts)
        return text
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc


def parse_pairs(text: str, source: str = "<config>"):
    """Split config text into an ordered ``{key: raw_value}`` mapping."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def settings_from_pairs(pairs, base: Settings | None = None) -> Settings:
    base = base or Settings()
    updates = {name: {} for name in ("scenario", "metric", "budget", "trigger", "run")}
    hyper = {}
    space = {"p_bounds": list(base.space.p_bounds), "dt_bounds": list(base.space.dt_bounds)}
    for key, text in pairs.items():
        if key in _ALIASES:
            section, name, slot = _ALIASES[key]
            value = _coerce(key, text, 0.0)
            if section == "space":
                space[name][slot] = value
            else:
                hyper[name] = value
            continue
        section, name, like = _FIELDS[key]
        updates[section][name] = _coerce(key, text, like)
    try:
        if "modes" in updates["run"]:
            for m in updates["run"]["modes"]:
                ConfigMode(m)
        run = replace(base.run, **updates["run"])
        budget = replace(base.budget, seed=run.seed, **updates["budget"])
        if hyper:
            budget = replace(budget, hyper=replace(budget.hyper, **hyper))
        return Settings(
            scenario=replace(base.scenario, **updates["scenario"]),
            metric=replace(base.metric, **updates["metric"]),
            budget=budget,
            space=SearchSpace(tuple(space["p_bounds"]), tuple(space["dt_bounds"])),
            trigger=replace(base.trigger, **updates["trigger"]),
            run=run,
        )
    except (NightHawkError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_settings(path=None, overrides=None) -> Settings:
    pairs = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                pairs = parse_pairs(fh.read(), str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    pairs.update(overrides or {})
    return settings_from_pairs(pairs)


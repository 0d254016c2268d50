"""Experiment configuration: one nested dataclass tree, loadable from YAML.

Files may start from a profile via ``include: desk`` (a packaged profile
name or a path relative to the including file); later keys win.  Unknown
keys are rejected.  Environment variables of the form

    LOCOMANIP_OPT_ppo__iterations=50

override single values (double underscore separates nesting levels) and are
applied after file contents, before explicit CLI overrides.  The resolved
tree is written next to every run's artifacts so the run can be reproduced
from the snapshot alone.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields, is_dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .env import ActionConfig, DisturbanceConfig, EnvConfig, PhysicsConfig
from .ppo import DistillConfig, PpoConfig
from .rewards import RewardConfig
from .task import CommandConfig

ENV_OVERRIDE_PREFIX = "LOCOMANIP_OPT_"

PROFILES = ("desk", "paper")

MODES = ("multi_critic", "single_critic")


class ConfigError(ValueError):
    """Invalid configuration file or overrides."""


@dataclass
class ExperimentConfig:
    seed: int = 0
    mode: str = "multi_critic"
    env: EnvConfig = field(default_factory=EnvConfig)
    commands: CommandConfig = field(default_factory=CommandConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")

    @property
    def num_critics(self) -> int:
        return 3 if self.mode == "multi_critic" else 1

    def curriculum_switch_iteration(self) -> int:
        if self.commands.frame_mode != "curriculum":
            return 0
        return int(round(self.commands.curriculum_switch_frac * self.ppo.iterations))


def _to_plain(value):
    if is_dataclass(value):
        return {f.name: _to_plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def to_dict(cfg: ExperimentConfig) -> dict:
    return _to_plain(cfg)


def _build_dataclass(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or cls.__name__}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path or cls.__name__}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        sub_path = f"{path}.{name}" if path else name
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if is_dataclass(default) or (isinstance(f.type, str) and f.type.endswith("Config")):
            sub_cls = type(default) if is_dataclass(default) else None
            if sub_cls is None:
                raise ConfigError(f"{sub_path}: cannot resolve nested config type")
            kwargs[name] = _build_dataclass(sub_cls, value, sub_path)
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{sub_path}: expected a list")
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or cls.__name__}: {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    return _build_dataclass(ExperimentConfig, data or {}, "")


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _profile_text(name: str) -> str:
    ref = resources.files("locomanip").joinpath(f"profiles/{name}.yaml")
    if not ref.is_file():
        raise ConfigError(f"unknown profile {name!r}; available: {PROFILES}")
    return ref.read_text()


def _load_tree(path_or_profile: str, base_dir: Path | None) -> dict:
    if path_or_profile in PROFILES:
        raw = yaml.safe_load(_profile_text(path_or_profile)) or {}
        origin = None
    else:
        p = Path(path_or_profile)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        raw = yaml.safe_load(p.read_text()) or {}
        origin = p.parent
    if not isinstance(raw, dict):
        raise ConfigError(f"{path_or_profile}: top level must be a mapping")
    include = raw.pop("include", None)
    if include is not None:
        base = _load_tree(str(include), origin)
        raw = _deep_merge(base, raw)
    return raw


def env_overrides(environ=None) -> dict:
    environ = environ if environ is not None else os.environ
    tree: dict = {}
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_OVERRIDE_PREFIX):
            continue
        dotted = key[len(ENV_OVERRIDE_PREFIX):].split("__")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"bad override {key}={raw!r}: {exc}") from exc
        node = tree
        for part in dotted[:-1]:
            node = node.setdefault(part, {})
        node[dotted[-1]] = value
    return tree


def load_config(path: str | None = None, profile: str | None = None,
                overrides: dict | None = None, use_env: bool = True) -> ExperimentConfig:
    """Resolve profile + file + environment + explicit overrides, in that order."""
    tree: dict = {}
    if profile is not None:
        tree = _load_tree(profile, None)
    if path is not None:
        tree = _deep_merge(tree, _load_tree(str(path), Path.cwd()))
    if use_env:
        tree = _deep_merge(tree, env_overrides())
    if overrides:
        tree = _deep_merge(tree, overrides)
    return from_dict(tree)


def save_snapshot(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(to_dict(cfg), sort_keys=True))


def load_snapshot(path) -> ExperimentConfig:
    return from_dict(yaml.safe_load(Path(path).read_text()))

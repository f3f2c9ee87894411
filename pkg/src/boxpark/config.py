"""Experiment configuration: one JSON document covering reward, curriculum,
environment, trainer, and composer sections, with defaults pinned to the
hyperparameter tables. Round-trips losslessly and rejects unknown fields with
field-level diagnostics.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

from .composer import ComposerConfig
from .curriculum import CurriculumConfig
from .env import DomainRandConfig, EnvConfig, NoiseConfig
from .ppo import AblationFlags, TrainerConfig
from .rewards import ReachThresholds, RewardConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs/exp"
    skill: str = "walk"
    reference_files: list = field(default_factory=list)   # empty -> synthesize
    mirror_augment: bool | None = None                    # None -> per-skill default
    robot_file: str | None = None                         # None -> desk biped
    eval_trials: int = 1000
    ablate: AblationFlags = field(default_factory=AblationFlags)
    reward: RewardConfig = field(default_factory=RewardConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    composer: ComposerConfig = field(default_factory=ComposerConfig)

    def __post_init__(self):
        self.env.skill = self.skill

    def mirror_enabled(self) -> bool:
        if self.mirror_augment is not None:
            return self.mirror_augment
        return self.skill in ("walk_jump", "walk_climb")

    def to_dict(self) -> dict:
        return _to_jsonable(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        cfg = _from_dict(cls, d, "config")
        cfg.reward.validate()
        cfg.curriculum.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path) as f:
                doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
        return cls.from_dict(doc)

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)


def _to_jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, tuple):
        return list(obj)
    if isinstance(obj, list):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    return obj


def _from_dict(cls, d: dict, path: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object, got {type(d).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        raise ConfigError(f"{path}: unknown field(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for name, f in known.items():
        if name not in d:
            continue
        val = d[name]
        sub = _field_dataclass(f)
        if sub is not None and val is not None:
            kwargs[name] = _from_dict(sub, val, f"{path}.{name}")
        elif isinstance(_default_of(f), tuple) and isinstance(val, list):
            kwargs[name] = tuple(val)
        else:
            kwargs[name] = val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}") from e


def _field_dataclass(f):
    t = f.type
    default = _default_of(f)
    if is_dataclass(default) and not isinstance(default, type):
        return type(default)
    if isinstance(t, type) and is_dataclass(t):
        return t
    return None


def _default_of(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:  # type: ignore[misc]
        return f.default_factory()
    return None

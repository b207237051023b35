"""Run configuration: YAML in, validated dataclasses out.

Unknown sections or keys are rejected. ``CUELAB_SEED`` in the environment
overrides the configured seed.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from .cue import CueConfig
from .errors import ConfigError, InvalidConfig
from .protocol import StudyConfig, plan_study
from .sim import AgentConfig
from .stim import StimConfig

SEED_ENV = "CUELAB_SEED"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    study: StudyConfig = field(default_factory=StudyConfig)
    cue: CueConfig = field(default_factory=CueConfig)
    stim: StimConfig = field(default_factory=lambda: StimConfig(enabled=False))
    sim: AgentConfig = field(default_factory=AgentConfig)


_SECTIONS = {"study": StudyConfig, "cue": CueConfig, "stim": StimConfig, "sim": AgentConfig}


def _build(cls, values, section: str):
    if not isinstance(values, Mapping):
        raise InvalidConfig(f"section {section!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise InvalidConfig(f"unknown key(s) in {section!r}: {', '.join(unknown)}")
    try:
        return cls(**values)
    except ConfigError as exc:
        raise InvalidConfig(f"{section}: {exc}") from None
    except TypeError as exc:
        raise InvalidConfig(f"{section}: {exc}") from None


def parse_config(doc: Mapping | None, env: Mapping[str, str] | None = None) -> RunConfig:
    doc = dict(doc or {})
    unknown = sorted(set(doc) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise InvalidConfig(f"unknown section(s): {', '.join(unknown)}")
    seed = doc.get("seed", 0)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise InvalidConfig(f"{SEED_ENV} must be an integer") from None
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise InvalidConfig("seed must be a non-negative integer")
    parts = {"seed": seed}
    for name, cls in _SECTIONS.items():
        values = doc.get(name) or {}
        if name == "study":
            values = {"seed": seed, **values}
        if name == "stim":
            values = {"enabled": False, **values}
        parts[name] = _build(cls, values, name)
    plan_study(parts["study"])  # raises InvalidConfig on an unusable schedule
    return RunConfig(**parts)


def load_config(path=None, env: Mapping[str, str] | None = None) -> RunConfig:
    if path is None:
        return parse_config({}, env)
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"cannot parse {path}: {exc}") from None
    if doc is not None and not isinstance(doc, Mapping):
        raise InvalidConfig("config file must hold a mapping")
    return parse_config(doc, env)

"""Negative-only cueing and the Layer-1 source gate.

A cue carries exactly one bit of information: distraction was detected.
There is no event kind, field or rendering parameter that could express
a reward, score or progress.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from ._kernels_py import cue_transition
from .errors import ConfigError, LayerViolation, NonMonotonicTime
from .fast import FEATURE_NAMES
from .signal import StreamId
from .somatic import FEATURE_STREAMS

CUE_TOKEN = "neutral-tone-1"


@dataclass(frozen=True)
class CueConfig:
    theta_on: float = 0.8
    theta_off: float = 0.4
    refractory_ms: int = 20_000
    min_consecutive_windows: int = 2

    def __post_init__(self):
        if not 0 < self.theta_off < self.theta_on <= 1:
            raise ConfigError("need 0 < theta_off < theta_on <= 1")
        if self.refractory_ms < 0:
            raise ConfigError("refractory_ms must be >= 0")
        if self.min_consecutive_windows < 1:
            raise ConfigError("min_consecutive_windows must be >= 1")


class CueKind(str, enum.Enum):
    DISTRACTION_DETECTED = "distraction_detected"


@dataclass(frozen=True)
class CueEvent:
    t_ms: int
    trigger_probability: float
    kind: CueKind = CueKind.DISTRACTION_DETECTED

    def __post_init__(self):
        object.__setattr__(self, "kind", CueKind(self.kind))


def render_cue(event: CueEvent) -> str:
    """Audio token for a cue; identical for every event by construction."""
    return CUE_TOKEN


@dataclass(frozen=True)
class SourceDescriptor:
    """A feature source asking to feed the Layer-1 classifier."""

    name: str
    streams: frozenset
    fields: tuple[str, ...] = ()

    @classmethod
    def for_features(cls, name: str, feature_names: Iterable[str]) -> "SourceDescriptor":
        names = tuple(feature_names)
        streams = set()
        for f in names:
            if f in FEATURE_NAMES:
                streams.add(StreamId.EEG)
            elif f in FEATURE_STREAMS:
                streams.add(StreamId(FEATURE_STREAMS[f]))
            else:
                raise ConfigError(f"unknown feature {f!r}")
        return cls(name, frozenset(streams), names)


FAST_EEG_SOURCE = SourceDescriptor("fast-eeg", frozenset({StreamId.EEG}), FEATURE_NAMES)


class Layer1Registry:
    """Accepts only fast EEG feature sources."""

    def __init__(self):
        self._sources: dict[str, SourceDescriptor] = {}

    def register(self, source: SourceDescriptor) -> None:
        for stream in sorted(StreamId(s).value for s in source.streams):
            if stream != StreamId.EEG.value:
                raise LayerViolation(stream, f"source {source.name!r}")
        if not source.streams:
            raise ConfigError(f"source {source.name!r} declares no stream")
        self._sources[source.name] = source

    @property
    def sources(self) -> tuple[SourceDescriptor, ...]:
        return tuple(self._sources.values())


def register_layer1_source(registry: Layer1Registry, source: SourceDescriptor) -> None:
    registry.register(source)


class CueEngine:
    """Threshold, confirmation, hysteresis and refractory state machine.

    A cue fires when the probability has been at or above ``theta_on`` for
    ``min_consecutive_windows`` windows, the engine is armed, and the
    refractory period since the last cue has elapsed. Firing disarms the
    engine until the probability drops below ``theta_off``.
    """

    def __init__(self, config: CueConfig = CueConfig()):
        self.config = config
        self.armed = True
        self.consecutive = 0
        self.last_cue_ms: int | None = None
        self.last_t_ms: int | None = None

    def _state(self):
        return (self.armed, self.consecutive, self.last_cue_ms is not None,
                self.last_cue_ms or 0, self.last_t_ms is not None, self.last_t_ms or 0)

    def _restore(self, state):
        armed, consec, has_last, last_cue, has_t, last_t = state
        self.armed = bool(armed)
        self.consecutive = int(consec)
        self.last_cue_ms = int(last_cue) if has_last else None
        self.last_t_ms = int(last_t) if has_t else None

    def step(self, t_ms: int, probability: float) -> CueEvent | None:
        if not 0.0 <= probability <= 1.0:
            raise ValueError(f"probability {probability} outside [0, 1]")
        if self.last_t_ms is not None and t_ms <= self.last_t_ms:
            raise NonMonotonicTime(f"t={t_ms} after t={self.last_t_ms}")
        self.last_t_ms = t_ms
        cfg = self.config
        fire, self.armed, self.consecutive, has_last, last = cue_transition(
            self.armed, self.consecutive, self.last_cue_ms is not None,
            self.last_cue_ms or 0, t_ms, probability, cfg.theta_on, cfg.theta_off,
            cfg.refractory_ms, cfg.min_consecutive_windows)
        if fire:
            self.last_cue_ms = last
            return CueEvent(t_ms, probability)
        return None

    def run(self, t_ms: Sequence[int], probabilities: Sequence[float]) -> list[CueEvent]:
        """Feed a whole stream through the compiled scan."""
        t = np.asarray(t_ms, dtype=np.int64)
        p = np.asarray(probabilities, dtype=float)
        if p.size and (p.min() < 0 or p.max() > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        cfg = self.config
        idx, state, bad = kernels.scan_cues(t, p, cfg.theta_on, cfg.theta_off,
                                            cfg.refractory_ms, cfg.min_consecutive_windows,
                                            self._state())
        self._restore(state)
        if bad >= 0:
            raise NonMonotonicTime(f"t={int(t[bad])} is not after the previous window")
        return [CueEvent(int(t[i]), float(p[i])) for i in idx]


def step(t_ms: int, probability: float, config: CueConfig, state: CueEngine) -> CueEvent | None:
    if state.config != config:
        raise ConfigError("engine state was created with a different CueConfig")
    return state.step(t_ms, probability)

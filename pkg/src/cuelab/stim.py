"""Stimulation safety gate: time-division multiplexing, amplitude lock, taVNS policy.

Every cycle is ``stim_on_ms`` of stimulation followed by ``pause_ms`` of
silence; only the part of the pause after ``settle_ms`` is valid for
recording. Layer-1 classification is suspended for the whole of any
epoch, because a 500 ms window cannot fit in a 50 ms valid slice.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import (AmplitudeLocked, AmplitudeNotSet, ConfigError, OutOfRange,
                     StimDisabled)
from .signal import Window
from .somatic import SomaticState

SAFETY_CEILING_MA = 3.0


@dataclass(frozen=True)
class StimConfig:
    amplitude_ma: float | None = None
    stim_on_ms: int = 400
    pause_ms: int = 100
    settle_ms: int = 50
    enabled: bool = True
    ceiling_ma: float = SAFETY_CEILING_MA
    epoch_ms: int = 60_000
    sustain_ms: int = 30_000
    cooldown_ms: int = 300_000
    session_started: bool = False

    def __post_init__(self):
        if min(self.stim_on_ms, self.pause_ms, self.settle_ms) <= 0:
            raise ConfigError("stimulation durations must be positive")
        if self.settle_ms > self.pause_ms:
            raise ConfigError("settle_ms cannot exceed pause_ms")
        if not 0 < self.ceiling_ma <= SAFETY_CEILING_MA:
            raise ConfigError(f"safety ceiling may only be lowered below {SAFETY_CEILING_MA} mA")
        if self.epoch_ms <= 0 or self.epoch_ms % self.cycle_ms:
            raise ConfigError("epoch length must be a whole number of cycles")

    @property
    def cycle_ms(self) -> int:
        return self.stim_on_ms + self.pause_ms


def set_amplitude(config: StimConfig, amplitude_ma: float) -> StimConfig:
    """Fix the session amplitude; it can be set exactly once, before start."""
    if config.session_started or config.amplitude_ma is not None:
        raise AmplitudeLocked("stimulation amplitude is fixed for this session")
    if not 0 < amplitude_ma <= config.ceiling_ma:
        raise OutOfRange(f"{amplitude_ma} mA outside (0, {config.ceiling_ma}] mA")
    return dataclasses.replace(config, amplitude_ma=float(amplitude_ma))


def start_session(config: StimConfig) -> StimConfig:
    if config.enabled and config.amplitude_ma is None:
        raise AmplitudeNotSet("set the amplitude before starting a stim session")
    return dataclasses.replace(config, session_started=True)


@dataclass(frozen=True)
class StimEpoch:
    start_ms: int
    end_ms: int
    amplitude_ma: float
    stim_on_ms: int = 400
    pause_ms: int = 100
    settle_ms: int = 50

    @property
    def cycle_ms(self) -> int:
        return self.stim_on_ms + self.pause_ms

    def cycles(self) -> list[tuple[tuple[int, int], tuple[int, int], tuple[int, int]]]:
        """(stim, settle, valid-record) half-open intervals for each cycle."""
        out = []
        for c in range(self.start_ms, self.end_ms, self.cycle_ms):
            stim_end = min(c + self.stim_on_ms, self.end_ms)
            settle_end = min(stim_end + self.settle_ms, self.end_ms)
            cycle_end = min(c + self.cycle_ms, self.end_ms)
            out.append(((c, stim_end), (stim_end, settle_end), (settle_end, cycle_end)))
        return out

    def blocked_intervals(self) -> list[tuple[int, int]]:
        """Stimulation and settling intervals, merged per cycle."""
        return [(stim[0], settle[1]) for stim, settle, _ in self.cycles()]

    def valid_fraction(self) -> Fraction:
        valid = sum(b - a for _, _, (a, b) in self.cycles())
        return Fraction(valid, self.end_ms - self.start_ms)

    def stim_fraction(self) -> Fraction:
        stim = sum(b - a for (a, b), _, _ in self.cycles())
        return Fraction(stim, self.end_ms - self.start_ms)


def is_recording_valid(epoch: StimEpoch, t_ms: int) -> bool:
    if not epoch.start_ms <= t_ms < epoch.end_ms:
        raise ValueError(f"t={t_ms} is outside the epoch")
    offset = (t_ms - epoch.start_ms) % epoch.cycle_ms
    return offset >= epoch.stim_on_ms + epoch.settle_ms


def overlaps(a0: int, a1: int, b0: int, b1: int) -> bool:
    return a0 < b1 and b0 < a1


def mask_windows(windows: Iterable[Window], epochs: Sequence[StimEpoch]) -> list[Window]:
    """Drop every window that overlaps any stimulation epoch."""
    return [w for w in windows
            if not any(overlaps(w.start_ms, w.end_ms, e.start_ms, e.end_ms) for e in epochs)]


def tavns_trigger(somatic_history: Sequence[SomaticState], config: StimConfig,
                  previous_epochs: Sequence[StimEpoch] = ()) -> StimEpoch | None:
    """Open an epoch when agitation has persisted and the cooldown has passed."""
    if not config.enabled:
        raise StimDisabled("stimulation is disabled for this session")
    if config.amplitude_ma is None:
        raise AmplitudeNotSet("amplitude must be set before triggering")
    if not somatic_history:
        return None
    now = somatic_history[-1].t_ms
    run_start = None
    for state in reversed(somatic_history):
        if not state.agitation:
            break
        run_start = state.t_ms
    if run_start is None or now - run_start < config.sustain_ms:
        return None
    if any(now - e.start_ms < config.cooldown_ms for e in previous_epochs):
        return None
    return StimEpoch(now, now + config.epoch_ms, config.amplitude_ma,
                     config.stim_on_ms, config.pause_ms, config.settle_ms)

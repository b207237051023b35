"""Append-only session log: a plain-text header, ``---``, then NDJSON records.

Each body line is ``{"kind": ..., "payload": {...}, "t_ms": ...}`` with
sorted keys and compact separators, so a write-read-write cycle is byte
identical. NaN payload values are stored as ``null``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .classifier import ProbeLabel
from .errors import InvariantViolation, ParseError
from .fast import FEATURE_NAMES, WIN_MS, FastFeatureVector
from .signal import EEG_CHANNELS

KINDS = ("sample", "feature", "somatic", "cue", "probe", "stim", "agent_truth")
SEPARATOR = "---"
MAGIC = "# cuelab session log v1"
HEADER_KEYS = ("session_id", "phase", "cueing_enabled", "seed", "stim_enabled",
               "amplitude_ma", "eeg_channels", "sample_rates")


@dataclass(frozen=True)
class SessionHeader:
    session_id: str
    phase: str
    cueing_enabled: bool
    seed: int
    stim_enabled: bool = False
    amplitude_ma: float | None = None
    eeg_channels: tuple[str, ...] = EEG_CHANNELS
    sample_rates: tuple[tuple[str, float], ...] = (
        ("EEG", 256.0), ("RESP", 25.0), ("IMU", 50.0), ("GSR", 4.0))

    def __post_init__(self):
        if self.phase not in ("A", "B", "C"):
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.phase == "A" and self.cueing_enabled:
            raise ValueError("Phase A sessions never cue")

    def lines(self) -> list[str]:
        amp = "none" if self.amplitude_ma is None else repr(float(self.amplitude_ma))
        rates = ",".join(f"{k}={v:g}" for k, v in self.sample_rates)
        return [
            MAGIC,
            f"session_id: {self.session_id}",
            f"phase: {self.phase}",
            f"cueing_enabled: {str(self.cueing_enabled).lower()}",
            f"seed: {self.seed}",
            f"stim_enabled: {str(self.stim_enabled).lower()}",
            f"amplitude_ma: {amp}",
            f"eeg_channels: {','.join(self.eeg_channels)}",
            f"sample_rates: {rates}",
        ]

    @classmethod
    def parse(cls, lines: list[str]) -> "SessionHeader":
        if not lines or lines[0] != MAGIC:
            raise ParseError("missing session log magic line", 1)
        values = {}
        for n, line in enumerate(lines[1:], start=2):
            key, sep, value = line.partition(":")
            if not sep or key not in HEADER_KEYS:
                raise ParseError(f"bad header line {line!r}", n)
            values[key] = value.strip()
        missing = [k for k in HEADER_KEYS if k not in values]
        if missing:
            raise ParseError(f"header lacks {', '.join(missing)}")

        def boolean(key):
            if values[key] not in ("true", "false"):
                raise ParseError(f"{key} must be true or false")
            return values[key] == "true"

        try:
            rates = tuple((k, float(v)) for k, v in
                          (item.split("=") for item in values["sample_rates"].split(",")))
            amp = None if values["amplitude_ma"] == "none" else float(values["amplitude_ma"])
            return cls(values["session_id"], values["phase"], boolean("cueing_enabled"),
                       int(values["seed"]), boolean("stim_enabled"), amp,
                       tuple(values["eeg_channels"].split(",")), rates)
        except ValueError as exc:
            raise ParseError(f"bad header value: {exc}") from None


@dataclass(frozen=True)
class Record:
    t_ms: int
    kind: str
    payload: dict = field(default_factory=dict)


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def encode_record(rec: Record) -> str:
    return json.dumps({"t_ms": int(rec.t_ms), "kind": rec.kind, "payload": _clean(rec.payload)},
                      sort_keys=True, separators=(",", ":"), allow_nan=False)


class SessionLog:
    """Header plus time-ordered records, validated on every append."""

    def __init__(self, header: SessionHeader, records: Iterable[Record] = ()):
        self.header = header
        self._records: list[Record] = []
        self._amplitude_records = 0
        for rec in records:
            self.append(rec)

    def __iter__(self) -> Iterator[Record]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[Record, ...]:
        return tuple(self._records)

    def append(self, rec: Record, line: int | None = None) -> None:
        if rec.kind not in KINDS:
            raise ParseError(f"unknown record kind {rec.kind!r}", line)
        if self._records and rec.t_ms < self._records[-1].t_ms:
            raise InvariantViolation(
                f"t_ms {rec.t_ms} precedes previous record at {self._records[-1].t_ms}", line)
        if rec.kind == "cue" and self.header.phase == "A":
            raise InvariantViolation("cue record in a Phase A log", line)
        if rec.kind == "stim":
            if not self.header.stim_enabled:
                raise InvariantViolation("stim record in a log with stimulation disabled", line)
            if rec.payload.get("event") == "amplitude":
                self._amplitude_records += 1
                if self._amplitude_records > 1:
                    raise InvariantViolation("more than one amplitude record", line)
                if rec.payload.get("amplitude_ma") != self.header.amplitude_ma:
                    raise InvariantViolation("amplitude record disagrees with header", line)
            elif rec.payload.get("event") == "epoch":
                if self._amplitude_records == 0:
                    raise InvariantViolation("stim epoch before the amplitude record", line)
                self._check_epoch_clear(rec, line)
        if rec.kind == "feature":
            for e in self.records_of("stim"):
                if e.payload.get("event") == "epoch" and self._overlaps(rec.t_ms, e):
                    raise InvariantViolation("feature window overlaps a stim epoch", line)
        self._records.append(rec)

    @staticmethod
    def _overlaps(feature_end: int, epoch: Record) -> bool:
        return feature_end - WIN_MS < epoch.payload["end_ms"] and epoch.t_ms < feature_end

    def _check_epoch_clear(self, epoch: Record, line) -> None:
        for f in self.records_of("feature"):
            if self._overlaps(f.t_ms, epoch):
                raise InvariantViolation("stim epoch overlaps a logged feature window", line)

    def validate_complete(self) -> None:
        """Checks that only make sense once the log is closed."""
        if self.header.stim_enabled and self._amplitude_records != 1:
            raise InvariantViolation("stim-enabled log needs exactly one amplitude record")

    def records_of(self, kind: str) -> list[Record]:
        return [r for r in self._records if r.kind == kind]

    def probes(self) -> list[ProbeLabel]:
        return [ProbeLabel(r.t_ms, r.payload["response"], r.payload.get("bucket"))
                for r in self.records_of("probe")]

    def feature_vectors(self) -> list[FastFeatureVector]:
        out = []
        for r in self.records_of("feature"):
            vals = [math.nan if r.payload.get(n) is None else float(r.payload[n])
                    for n in FEATURE_NAMES]
            out.append(FastFeatureVector(r.t_ms, *vals, bool(r.payload.get("quality_flag"))))
        return out

    def body(self) -> str:
        return "".join(encode_record(r) + "\n" for r in self._records)

    def dumps(self) -> str:
        return "\n".join(self.header.lines()) + "\n" + SEPARATOR + "\n" + self.body()

    def write(self, path) -> None:
        self.validate_complete()
        Path(path).write_text(self.dumps(), encoding="utf-8")


def feature_record(fv: FastFeatureVector) -> Record:
    payload = {n: getattr(fv, n) for n in FEATURE_NAMES}
    payload["quality_flag"] = fv.quality_flag
    return Record(fv.t_ms, "feature", payload)


def loads_session_log(text: str) -> SessionLog:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    try:
        sep = lines.index(SEPARATOR)
    except ValueError:
        raise ParseError("no '---' line between header and body") from None
    log = SessionLog(SessionHeader.parse(lines[:sep]))
    for n, line in enumerate(lines[sep + 1:], start=sep + 2):
        try:
            obj = json.loads(line)
            rec = Record(int(obj["t_ms"]), str(obj["kind"]), dict(obj["payload"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad record: {exc}", n) from None
        log.append(rec, n)
    log.validate_complete()
    return log


def load_session_log(path) -> SessionLog:
    return loads_session_log(Path(path).read_text(encoding="utf-8"))

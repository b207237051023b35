"""Four-criteria device audit over a measurability-tier registry."""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import yaml

from .errors import IncompleteDescriptor

log = logging.getLogger(__name__)

FAST_EEG_TAG = "EEG-fast"
REQUIRED_KEYS = ("name", "targets", "feedback_polarity", "layer1_inputs",
                 "transfer_outcome_primary")
COLUMNS = ("System", "Single measurable target", "Negative-only feedback",
           "Layer separation", "Transfer test", "Verdict")


class Tier(str, enum.Enum):
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"
    UNKNOWN = "T_unknown"


class Polarity(str, enum.Enum):
    POSITIVE_REWARD = "positive_reward"
    NEGATIVE_ONLY = "negative_only"
    NONE = "none"


@dataclass(frozen=True)
class TargetDescriptor:
    name: str
    tier: Tier
    evidence_note: str = ""


def normalize(name: str) -> str:
    s = name.lower().replace("vs.", "vs").replace("–", "-")
    return re.sub(r"\s+", " ", s).strip()


class TierRegistry:
    def __init__(self, entries: Iterable[TargetDescriptor],
                 aliases: Mapping[str, str] | None = None):
        self._entries = {normalize(e.name): e for e in entries}
        self._aliases = {normalize(a): normalize(n) for a, n in (aliases or {}).items()}

    @classmethod
    def from_yaml(cls, text: str) -> "TierRegistry":
        doc = yaml.safe_load(text) or {}
        entries, aliases = [], {}
        for item in doc.get("targets", []):
            entries.append(TargetDescriptor(item["name"], Tier(f"T{int(item['tier'])}"),
                                            item.get("note", "")))
            for a in item.get("aliases", []):
                aliases[a] = item["name"]
        return cls(entries, aliases)

    @classmethod
    def canonical(cls) -> "TierRegistry":
        text = resources.files("cuelab").joinpath("data/tiers.yaml").read_text("utf-8")
        return cls.from_yaml(text)

    def lookup(self, name: str) -> TargetDescriptor:
        key = normalize(name)
        key = self._aliases.get(key, key)
        if key in self._entries:
            return self._entries[key]
        log.warning("target %r is not in the tier registry", name)
        return TargetDescriptor(name, Tier.UNKNOWN, "not in registry")

    def __iter__(self):
        return iter(self._entries.values())


_CANONICAL: TierRegistry | None = None


def canonical_registry() -> TierRegistry:
    global _CANONICAL
    if _CANONICAL is None:
        _CANONICAL = TierRegistry.canonical()
    return _CANONICAL


def classify_tier(name: str, registry: TierRegistry | None = None) -> Tier:
    return (registry or canonical_registry()).lookup(name).tier


@dataclass(frozen=True)
class DeviceDescriptor:
    name: str
    targets: tuple[TargetDescriptor, ...]
    feedback_polarity: Polarity
    layer1_inputs: tuple[str, ...]
    transfer_outcome_primary: bool
    criterion_notes: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, d: Mapping, registry: TierRegistry | None = None):
        missing = [k for k in REQUIRED_KEYS if k not in d or d[k] is None]
        if missing:
            raise IncompleteDescriptor(
                f"device {d.get('name', '?')!r} lacks {', '.join(missing)}")
        reg = registry or canonical_registry()
        return cls(str(d["name"]), tuple(reg.lookup(t) for t in d["targets"]),
                   Polarity(d["feedback_polarity"]), tuple(d["layer1_inputs"]),
                   bool(d["transfer_outcome_primary"]), dict(d.get("criterion_notes") or {}))


def load_devices(path=None, registry: TierRegistry | None = None) -> list[DeviceDescriptor]:
    """Read device descriptors from YAML; the shipped set when ``path`` is None."""
    if path is None:
        text = resources.files("cuelab").joinpath("data/devices.yaml").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    doc = yaml.safe_load(text) or {}
    return [DeviceDescriptor.from_mapping(d, registry) for d in doc.get("devices", [])]


@dataclass(frozen=True)
class Criterion:
    passed: bool
    cell: str


@dataclass(frozen=True)
class AuditResult:
    device: str
    single_target: Criterion
    negative_only: Criterion
    layer_separation: Criterion
    transfer_primary: Criterion
    warnings: tuple[str, ...] = ()

    @property
    def criteria(self) -> tuple[Criterion, ...]:
        return (self.single_target, self.negative_only, self.layer_separation,
                self.transfer_primary)

    @property
    def verdict(self) -> bool:
        return all(c.passed for c in self.criteria)

    def cells(self) -> tuple[str, ...]:
        return tuple(c.cell for c in self.criteria)


def _yes_no(ok: bool, note: str | None) -> Criterion:
    if ok:
        return Criterion(True, "Yes")
    return Criterion(False, "Rarely" if note == "rarely" else "No")


def audit_device(dev: DeviceDescriptor) -> AuditResult:
    """Evaluate the four criteria; pure and total over complete descriptors."""
    if dev is None or not dev.name:
        raise IncompleteDescriptor("descriptor has no name")
    warnings = tuple(
        f"misrepresentation: {dev.name} targets {t.name!r} ({t.tier.value})"
        for t in dev.targets if t.tier in (Tier.T3, Tier.T4))
    for w in warnings:
        log.warning(w)
    if dev.feedback_polarity is Polarity.NONE:
        na = Criterion(False, "N/A")
        return AuditResult(dev.name, na, na, na, na, warnings)
    notes = dev.criterion_notes
    if len(dev.targets) == 1 and dev.targets[0].tier is Tier.T1:
        single = Criterion(True, "Yes")
    elif len(dev.targets) == 1 and dev.targets[0].tier is Tier.T2:
        single = Criterion(False, "Partial")
    else:
        single = Criterion(False, "No")
    negative = _yes_no(dev.feedback_polarity is Polarity.NEGATIVE_ONLY, None)
    if not dev.layer1_inputs:
        # no fast/slow layer concept at all: fails, annotated as not applicable
        layers = Criterion(False, "Not applicable")
    else:
        layers = _yes_no(set(dev.layer1_inputs) <= {FAST_EEG_TAG},
                         notes.get("layer_separation"))
    transfer = _yes_no(dev.transfer_outcome_primary, notes.get("transfer_primary"))
    return AuditResult(dev.name, single, negative, layers, transfer, warnings)


def render_audit_table(results: Sequence[AuditResult]) -> str:
    """Fixed-width table, one row per device, in the given order."""
    if not results:
        raise ValueError("need at least one audited device")
    rows = [COLUMNS] + [(r.device,) + r.cells() + ("PASS" if r.verdict else "FAIL",)
                        for r in results]
    widths = [max(len(row[i]) for row in rows) for i in range(len(COLUMNS))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def all_criteria_passers(results: Iterable[AuditResult]) -> list[str]:
    return [r.device for r in results if r.verdict]

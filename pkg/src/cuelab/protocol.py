"""Study plan, probe scheduling, correction intervals and the transfer test.

The transfer test is the only success criterion: Phase C (device removed)
correction intervals must be significantly shorter than the Phase A
baseline. In-session numbers from Phase B never enter the verdict.
"""
from __future__ import annotations

import enum
import logging
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .classifier import ProbeLabel, ProbeResponse
from .errors import InvalidConfig, NoProbes, SessionTooShort, TooFewSessions

log = logging.getLogger(__name__)

ALPHA = 0.05
HYPOTHESIS = (
    "H1 (pre-registered, one-sided): per-session median correction interval in "
    "Phase C (device removed) is stochastically smaller than in Phase A (baseline); "
    "Mann-Whitney U, alpha = 0.05"
)
FAIL_LABEL = "FAIL: dependency or no effect"
PASS_LABEL = "PASS: skill transferred to unassisted practice"

# midpoint (ms) of each self-reported wandering-duration bucket
DURATION_BUCKETS_MS = {"<10s": 5_000, "10-60s": 35_000, ">60s": 90_000}


class Phase(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"


@dataclass(frozen=True)
class StudyConfig:
    sessions_per_week: int = 5
    session_minutes: float = 20.0
    weeks_a: int = 2
    weeks_b: int = 6
    weeks_c: int = 2
    sham: bool = False
    seed: int = 0


@dataclass(frozen=True)
class PlannedSession:
    session_id: str
    phase: Phase
    week: int
    cueing_enabled: bool
    sensing_enabled: bool
    duration_ms: int


@dataclass(frozen=True)
class StudyPlan:
    sessions: tuple[PlannedSession, ...]
    config: StudyConfig

    def phase(self, phase: Phase) -> list[PlannedSession]:
        return [s for s in self.sessions if s.phase is Phase(phase)]

    def weeks(self, phase: Phase) -> list[int]:
        return sorted({s.week for s in self.phase(phase)})


def plan_study(config: StudyConfig = StudyConfig()) -> StudyPlan:
    if config.sessions_per_week < 3:
        raise InvalidConfig("need at least 3 sessions per week")
    if min(config.weeks_a, config.weeks_b, config.weeks_c) < 1:
        raise InvalidConfig("every phase needs at least one week")
    if config.session_minutes <= 0:
        raise InvalidConfig("session length must be positive")
    rng = np.random.default_rng(config.seed)
    duration = int(round(config.session_minutes * 60_000))
    sessions = []
    week = 0
    for phase, n_weeks in ((Phase.A, config.weeks_a), (Phase.B, config.weeks_b),
                           (Phase.C, config.weeks_c)):
        for _ in range(n_weeks):
            week += 1
            cue_free = int(rng.integers(config.sessions_per_week))
            for k in range(config.sessions_per_week):
                cueing = phase is Phase.B and k != cue_free
                sessions.append(PlannedSession(
                    session_id=f"w{week:02d}-s{k + 1}",
                    phase=phase,
                    week=week,
                    cueing_enabled=cueing,
                    sensing_enabled=phase is not Phase.C,
                    duration_ms=duration,
                ))
    return StudyPlan(tuple(sessions), config)


def schedule_probes(session, seed: int, min_gap_ms: int = 120_000,
                    max_gap_ms: int = 300_000) -> list[int]:
    """Probe times with gaps drawn uniformly from ``[min_gap_ms, max_gap_ms]``.

    ``session`` is a :class:`PlannedSession` or a duration in ms.
    """
    duration = session.duration_ms if isinstance(session, PlannedSession) else int(session)
    if duration < min_gap_ms:
        raise SessionTooShort(f"session of {duration} ms is shorter than one probe gap")
    rng = np.random.default_rng(seed)
    times = []
    t = 0
    while True:
        t += int(rng.integers(min_gap_ms, max_gap_ms + 1))
        if t >= duration:
            return times
        times.append(t)


class IntervalMethod(str, enum.Enum):
    EEG = "eeg_estimated"
    PROBE = "probe_estimated"
    SIM = "sim_ground_truth"


@dataclass(frozen=True)
class CorrectionInterval:
    session_id: str
    onset_t_ms: int
    correction_t_ms: int
    method: IntervalMethod

    def __post_init__(self):
        if self.correction_t_ms <= self.onset_t_ms:
            raise ValueError("correction must come after onset")

    @property
    def duration_ms(self) -> int:
        return self.correction_t_ms - self.onset_t_ms


def intervals_from_probabilities(session_id: str, t_ms: Sequence[int],
                                 probabilities: Sequence[float],
                                 probes: Sequence[ProbeLabel] = (),
                                 theta_on: float = 0.8, theta_off: float = 0.4,
                                 min_consecutive: int = 2,
                                 sustain_ms: int = 2000) -> list[CorrectionInterval]:
    """EEG-estimated intervals from a per-window wandering probability trace.

    Onset is the first window of a run of ``min_consecutive`` windows at or
    above ``theta_on``. Correction is the earlier of the first window that
    starts ``sustain_ms`` below ``theta_off`` and the next probe answered
    "settled". Episodes still open at the end of the trace are dropped.
    """
    t = np.asarray(t_ms, dtype=np.int64)
    p = np.asarray(probabilities, dtype=float)
    settled = sorted(pr.t_ms for pr in probes if pr.response is ProbeResponse.SETTLED)
    out = []
    n = len(t)
    i = 0
    while i < n:
        run = 0
        onset = None
        while i < n:
            run = run + 1 if p[i] >= theta_on else 0
            if run >= min_consecutive:
                onset = i - run + 1
                break
            i += 1
        if onset is None:
            break
        corr_t = None
        j = i + 1
        while j < n:
            if p[j] < theta_off:
                k = j
                while k < n and t[k] <= t[j] + sustain_ms and p[k] < theta_off:
                    k += 1
                if k < n and t[k] > t[j] + sustain_ms or (k == n and t[-1] >= t[j] + sustain_ms):
                    corr_t = int(t[j])
                    break
                j = k if k > j else j + 1
            else:
                j += 1
        onset_t = int(t[onset])
        probe_t = next((s for s in settled if s > onset_t), None)
        if probe_t is not None and (corr_t is None or probe_t < corr_t):
            corr_t = probe_t
        if corr_t is None:
            break
        out.append(CorrectionInterval(session_id, onset_t, corr_t, IntervalMethod.EEG))
        i = int(np.searchsorted(t, corr_t, side="left"))
    return out


def intervals_from_probes(session_id: str,
                          probes: Sequence[ProbeLabel]) -> list[CorrectionInterval]:
    """Probe-only estimate: bucket midpoint, capped by the gap to the previous probe."""
    if not probes:
        raise NoProbes(f"session {session_id} has no probes")
    out = []
    prev = None
    for probe in sorted(probes, key=lambda pr: pr.t_ms):
        if probe.response is ProbeResponse.WANDERING:
            if probe.duration_bucket not in DURATION_BUCKETS_MS:
                log.warning("wandering probe at t=%d has no duration bucket", probe.t_ms)
            else:
                dur = DURATION_BUCKETS_MS[probe.duration_bucket]
                if prev is not None:
                    dur = min(dur, probe.t_ms - prev)
                if dur > 0:
                    out.append(CorrectionInterval(session_id, probe.t_ms - dur, probe.t_ms,
                                                  IntervalMethod.PROBE))
        prev = probe.t_ms
    return out


def intervals_from_truth(session_id: str,
                         transitions: Iterable[tuple[int, str]]) -> list[CorrectionInterval]:
    """Simulator ground truth: each wandering episode from entry to exit.

    An ``"end"`` marker closes the record; an episode still open there is
    censored and dropped.
    """
    out = []
    onset = None
    for t, state in transitions:
        if state == "end":
            break
        if state == "wandering":
            if onset is None:
                onset = int(t)
        elif onset is not None:
            if t > onset:
                out.append(CorrectionInterval(session_id, onset, int(t), IntervalMethod.SIM))
            onset = None
    return out


def estimate_correction_intervals(log_, model=None, config=None,
                                  method: IntervalMethod | str | None = None):
    """Correction intervals for one :class:`~cuelab.sessionlog.SessionLog`.

    ``method`` defaults to simulator truth when the log carries it, EEG
    estimation when it carries feature records, and probes otherwise.
    """
    from .cue import CueConfig
    from .errors import NoModel

    config = config or CueConfig()
    sid = log_.header.session_id
    probes = log_.probes()
    if method is None:
        if log_.records_of("agent_truth"):
            method = IntervalMethod.SIM
        elif log_.records_of("feature"):
            method = IntervalMethod.EEG
        else:
            method = IntervalMethod.PROBE
    method = IntervalMethod(method)
    if method is IntervalMethod.SIM:
        return intervals_from_truth(sid, ((r.t_ms, r.payload["state"])
                                          for r in log_.records_of("agent_truth")))
    if method is IntervalMethod.PROBE:
        return intervals_from_probes(sid, probes)
    if model is None:
        raise NoModel("EEG-mode interval estimation needs a trained model")
    vectors = [v for v in log_.feature_vectors() if v.quality_flag]
    if not vectors:
        return []
    probs = model.predict_proba(np.array([v.as_array() for v in vectors]))
    return intervals_from_probabilities(
        sid, [v.t_ms for v in vectors], probs, probes, config.theta_on,
        config.theta_off, config.min_consecutive_windows)


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p_value: float
    exact: bool


def _doubled_midranks(values: np.ndarray) -> np.ndarray:
    """Twice the average rank of each value (integers, ties shared)."""
    order = np.argsort(values, kind="stable")
    sorted_v = values[order]
    ranks2 = np.empty(len(values), dtype=np.int64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks2[order[i:j + 1]] = (i + 1) + (j + 1)
        i = j + 1
    return ranks2


def _subset_sum_counts(weights: np.ndarray, k: int) -> np.ndarray:
    """counts[s] = number of k-subsets of ``weights`` summing to ``s``."""
    total = int(weights.sum())
    dp = np.zeros((k + 1, total + 1))
    dp[0, 0] = 1.0
    for w in weights:
        w = int(w)
        for j in range(k, 0, -1):
            dp[j, w:] += dp[j - 1, : total + 1 - w]
    return dp[k]


def mann_whitney_u(sample_a: Sequence[float], sample_c: Sequence[float],
                   exact_limit: int = 400) -> MannWhitneyResult:
    """One-sided test that ``sample_c`` is stochastically smaller than ``sample_a``.

    ``u`` counts pairs with c > a (ties count one half), so small ``u``
    favours the alternative. Exact permutation distribution of the
    (tie-aware) rank sum when ``n_a * n_c <= exact_limit``, else normal
    approximation with tie and continuity correction.
    """
    a = np.asarray(sample_a, dtype=float)
    c = np.asarray(sample_c, dtype=float)
    if a.size < 3 or c.size < 3:
        raise TooFewSessions(f"need >= 3 values per group, got {a.size} and {c.size}")
    na, nc = a.size, c.size
    pooled = np.concatenate([a, c])
    r2 = _doubled_midranks(pooled)
    rc2 = int(r2[na:].sum())
    u = (rc2 - nc * (nc + 1)) / 2.0
    if na * nc <= exact_limit:
        total2 = int(r2.sum())
        if nc <= na:
            counts = _subset_sum_counts(r2, nc)
            hits = counts[: rc2 + 1].sum()
        else:
            counts = _subset_sum_counts(r2, na)
            hits = counts[total2 - rc2:].sum()
        p = float(hits / counts.sum())
        return MannWhitneyResult(u, min(1.0, p), True)
    n = na + nc
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1))
    var = na * nc / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return MannWhitneyResult(u, 1.0, False)
    z = (u + 0.5 - na * nc / 2.0) / math.sqrt(var)
    return MannWhitneyResult(u, statistics.NormalDist().cdf(z), False)


@dataclass(frozen=True)
class TransferVerdict:
    phase_a_medians: tuple[float, ...]
    phase_c_medians: tuple[float, ...]
    u_statistic: float
    p_value: float
    passed: bool
    alpha: float = ALPHA
    hypothesis: str = HYPOTHESIS
    exact: bool = True

    @property
    def label(self) -> str:
        return PASS_LABEL if self.passed else FAIL_LABEL

    # the field is named ``pass`` in reports; ``pass`` is a keyword here
    @property
    def pass_(self) -> bool:
        return self.passed


def session_medians(intervals) -> tuple[float, ...]:
    """Per-session median durations, sorted ascending.

    Accepts :class:`CorrectionInterval` objects or a mapping of session id
    to durations in ms.
    """
    groups: dict[str, list[float]] = defaultdict(list)
    if isinstance(intervals, Mapping):
        for sid, durations in intervals.items():
            groups[sid].extend(float(d) for d in durations)
    else:
        for iv in intervals:
            groups[iv.session_id].append(float(iv.duration_ms))
    return tuple(sorted(float(np.median(v)) for v in groups.values() if v))


def transfer_test(intervals_a, intervals_c, alpha: float = ALPHA) -> TransferVerdict:
    a = session_medians(intervals_a)
    c = session_medians(intervals_c)
    res = mann_whitney_u(a, c)
    return TransferVerdict(a, c, res.u, res.p_value, res.p_value < alpha, alpha,
                           HYPOTHESIS, res.exact)

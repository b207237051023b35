"""Layer-2/3 features: HRV, respiration and posture on slow windows.

These values feed gross agitation/dullness estimation and taVNS triggering.
They never reach the fast EEG path (see :mod:`cuelab.cue`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import signal as sps

from .errors import (ImuSaturated, MissingBaseline, NoBeatsDetected,
                     NoBreathDetected, SpanTooShort, TooFewBeats)
from .signal import HF, LF, RESP_BAND, band_power, detrend_taper, zscore

log = logging.getLogger(__name__)

MIN_WINDOW_MS = 10_000
MAX_WINDOW_MS = 30_000
LF_HF_SPAN_MS = 60_000
IBI_MIN_MS = 300.0
IBI_MAX_MS = 2000.0
RESAMPLE_HZ = 4.0

# which raw stream each somatic feature comes from
FEATURE_STREAMS = {
    "rmssd_ms": "IBI",
    "lf_hf": "IBI",
    "resp_rate_bpm": "RESP",
    "resp_depth": "RESP",
    "resp_irregularity": "RESP",
    "head_pitch_deg": "IMU",
    "movement_jitter": "IMU",
}


@dataclass(frozen=True)
class IbiSeries:
    t_ms: np.ndarray
    ibi_ms: np.ndarray
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.ibi_ms)


def detect_ibis(stream) -> IbiSeries:
    """Plausibility-filter an IBI stream.

    ``stream`` is an iterable of ``(t_ms, ibi_ms)`` pairs, of IBI
    :class:`~cuelab.signal.SampleFrame` objects, or a bare sequence of
    IBIs (timestamps are then the cumulative beat times).
    """
    pairs = []
    items = list(stream)
    if not items:
        raise NoBeatsDetected("empty IBI stream")
    if all(np.isscalar(v) for v in items):
        t = np.cumsum(np.asarray(items, dtype=float))
        pairs = list(zip(t, items))
    else:
        for item in items:
            if hasattr(item, "channel_values"):
                pairs.append((item.t_ms, item.channel_values[0]))
            else:
                pairs.append((item[0], item[1]))
    t = np.array([p[0] for p in pairs], dtype=float)
    ibi = np.array([p[1] for p in pairs], dtype=float)
    keep = (ibi >= IBI_MIN_MS) & (ibi <= IBI_MAX_MS)
    dropped = int((~keep).sum())
    if dropped:
        log.debug("dropped %d implausible IBIs", dropped)
    if not keep.any():
        raise NoBeatsDetected("no plausible beats in stream")
    return IbiSeries(t[keep], ibi[keep], dropped)


def rmssd(ibis: Sequence[float]) -> float:
    x = np.asarray(ibis, dtype=float)
    if x.size < 2:
        raise TooFewBeats("RMSSD needs at least two IBIs")
    d = np.diff(x)
    return math.sqrt(float(np.mean(d * d)))


def _resample_ibis(t_ms: np.ndarray, ibi_ms: np.ndarray) -> np.ndarray:
    t = np.asarray(t_ms, dtype=float) / 1000.0
    grid = np.arange(t[0], t[-1], 1.0 / RESAMPLE_HZ)
    return np.interp(grid, t, np.asarray(ibi_ms, dtype=float))


def lf_hf_ratio(ibis, min_span_ms: int = LF_HF_SPAN_MS, min_beats: int = 30) -> float:
    """LF (0.04-0.15 Hz) over HF (0.15-0.40 Hz) power of the 4 Hz resampled tachogram.

    ``ibis`` is an :class:`IbiSeries` or a sequence of ``(t_ms, ibi_ms)``.
    """
    if not isinstance(ibis, IbiSeries):
        arr = np.asarray(list(ibis), dtype=float).reshape(-1, 2)
        ibis = IbiSeries(arr[:, 0], arr[:, 1])
    if len(ibis) < min_beats:
        raise TooFewBeats(f"LF/HF needs {min_beats} beats, got {len(ibis)}")
    span = ibis.t_ms[-1] - ibis.t_ms[0]
    if span < min_span_ms:
        raise SpanTooShort(f"LF/HF needs {min_span_ms} ms of beats, got {span:.0f}")
    x = _resample_ibis(ibis.t_ms, ibis.ibi_ms)
    lf = band_power(x, LF, RESAMPLE_HZ)
    hf = band_power(x, HF, RESAMPLE_HZ)
    if hf <= 0:
        return math.inf
    return lf / hf


@dataclass(frozen=True)
class RespirationFeatures:
    rate_bpm: float
    depth: float
    irregularity: float


def respiration_features(resp: np.ndarray, sample_rate: float) -> RespirationFeatures:
    """Rate from the dominant 0.05-0.5 Hz peak, depth and breath-interval CV."""
    x = np.asarray(resp, dtype=float).ravel()
    if x.size * 1000.0 / sample_rate < MIN_WINDOW_MS - 1e-6:
        raise ValueError("respiration window must be at least 10 s")
    if np.ptp(x) < 1e-9:
        raise NoBreathDetected("flat respiration trace")
    xw, _ = detrend_taper(x)
    nfft = max(1 << 16, 1 << int(math.ceil(math.log2(x.size))))
    spec = np.abs(np.fft.rfft(xw, n=nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, d=1.0 / sample_rate)
    sel = (freqs >= RESP_BAND.lo_hz) & (freqs <= RESP_BAND.hi_hz)
    if not np.any(spec[sel] > 0):
        raise NoBreathDetected("no power in the respiration band")
    f_dom = float(freqs[sel][np.argmax(spec[sel])])

    xd = sps.detrend(x)
    distance = max(1, int(0.5 * sample_rate / f_dom))
    prominence = 0.25 * np.ptp(xd)
    peaks, _ = sps.find_peaks(xd, distance=distance, prominence=prominence)
    troughs, _ = sps.find_peaks(-xd, distance=distance, prominence=prominence)
    if peaks.size == 0 or troughs.size == 0:
        raise NoBreathDetected("no breath cycles found")
    depths = []
    for p in peaks:
        later = troughs[troughs > p]
        q = later[0] if later.size else troughs[troughs < p][-1]
        depths.append(xd[p] - xd[q])
    intervals = np.diff(peaks) / sample_rate
    irregularity = float(np.std(intervals) / np.mean(intervals)) if intervals.size >= 2 else 0.0
    return RespirationFeatures(f_dom * 60.0, float(np.mean(depths)), irregularity)


@dataclass(frozen=True)
class ImuFeatures:
    head_pitch_deg: float
    movement_jitter: float


def imu_features(imu: np.ndarray, sample_rate: float,
                 saturation_g: float = 4.0, sustain_ms: int = 250) -> ImuFeatures:
    """Head pitch from the mean gravity vector and accel-magnitude jitter.

    ``imu`` columns are ax, ay, az (g) then optional gyro columns. The x
    axis points forward and z up; a forward head droop gives negative
    pitch. Pitch is NaN when the mean accel magnitude is not within
    1 +/- 0.3 g, since the gravity estimate is then unreliable.
    """
    a = np.asarray(imu, dtype=float)
    if a.ndim != 2 or a.shape[1] < 3:
        raise ValueError("IMU block must have at least 3 accel columns")
    acc = a[:, :3]
    mag = np.linalg.norm(acc, axis=1)
    over = mag > saturation_g
    need = max(1, int(round(sustain_ms / 1000.0 * sample_rate)))
    run = 0
    for flag in over:
        run = run + 1 if flag else 0
        if run >= need:
            raise ImuSaturated(f"|accel| above {saturation_g} g for {sustain_ms} ms")
    g = acc.mean(axis=0)
    if abs(np.linalg.norm(g) - 1.0) <= 0.3:
        pitch = math.degrees(math.atan2(g[0], g[2]))
    else:
        pitch = math.nan
    jitter = float(np.sqrt(np.mean((mag - mag.mean()) ** 2)))
    return ImuFeatures(pitch, jitter)


@dataclass(frozen=True)
class SomaticFeatures:
    t_ms: int
    rmssd_ms: float
    lf_hf: float
    resp_rate_bpm: float
    resp_depth: float
    resp_irregularity: float
    head_pitch_deg: float
    movement_jitter: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def extract_somatic_features(t_ms: int, window_ms: int, ibis: IbiSeries,
                             resp: np.ndarray, resp_rate_hz: float,
                             imu: np.ndarray, imu_rate_hz: float) -> SomaticFeatures:
    """Compute one slow-path feature row ending at ``t_ms``.

    ``resp`` and ``imu`` cover the last ``window_ms``; ``ibis`` may reach
    back the 60 s that LF/HF needs. RMSSD uses only the beats inside the
    slow window.
    """
    if not MIN_WINDOW_MS <= window_ms <= MAX_WINDOW_MS:
        raise ValueError("slow windows must be 10-30 s long")
    recent = ibis.t_ms > t_ms - window_ms
    trailing = ibis.t_ms > t_ms - LF_HF_SPAN_MS - 2000
    r = respiration_features(resp, resp_rate_hz)
    m = imu_features(imu, imu_rate_hz)
    return SomaticFeatures(
        t_ms=t_ms,
        rmssd_ms=rmssd(ibis.ibi_ms[recent]),
        lf_hf=lf_hf_ratio(IbiSeries(ibis.t_ms[trailing], ibis.ibi_ms[trailing])),
        resp_rate_bpm=r.rate_bpm,
        resp_depth=r.depth,
        resp_irregularity=r.irregularity,
        head_pitch_deg=m.head_pitch_deg,
        movement_jitter=m.movement_jitter,
    )


MARKERS = ("lf_hf", "movement_jitter", "theta", "head_pitch_deg", "resp_rate_bpm")


@dataclass(frozen=True)
class BaselineStats:
    mean: Mapping[str, float]
    sd: Mapping[str, float]

    @classmethod
    def from_samples(cls, features: Iterable[SomaticFeatures],
                     theta_powers: Iterable[float]) -> "BaselineStats":
        rows = list(features)
        cols = {
            "lf_hf": [f.lf_hf for f in rows],
            "movement_jitter": [f.movement_jitter for f in rows],
            "head_pitch_deg": [f.head_pitch_deg for f in rows],
            "resp_rate_bpm": [f.resp_rate_bpm for f in rows],
            "theta": list(theta_powers),
        }
        mean = {k: float(np.nanmean(v)) for k, v in cols.items()}
        sd = {k: float(np.nanstd(v, ddof=1)) for k, v in cols.items()}
        return cls(mean, sd)


@dataclass(frozen=True)
class StateThresholds:
    z: float = 1.5
    dullness_votes: int = 2


@dataclass(frozen=True)
class SomaticState:
    t_ms: int
    agitation: bool
    dullness: bool
    marker_zscores: dict = field(default_factory=dict)
    conflict: bool = False


def gross_state(features: SomaticFeatures, eeg_theta_power: float,
                baseline: BaselineStats,
                thresholds: StateThresholds = StateThresholds()) -> SomaticState:
    """Gross agitation/dullness relative to the Phase-A baseline."""
    for marker in MARKERS:
        if marker not in baseline.mean or marker not in baseline.sd:
            raise MissingBaseline(f"baseline has no statistics for {marker!r}")
    values = {
        "lf_hf": features.lf_hf,
        "movement_jitter": features.movement_jitter,
        "theta": eeg_theta_power,
        "head_pitch_deg": features.head_pitch_deg,
        "resp_rate_bpm": features.resp_rate_bpm,
    }
    z = {k: zscore(v, baseline.mean[k], baseline.sd[k]) for k, v in values.items()}
    th = thresholds.z
    agitation = z["lf_hf"] > th and z["movement_jitter"] > th
    votes = sum((z["theta"] > th, -z["head_pitch_deg"] > th, -z["resp_rate_bpm"] > th))
    dullness = votes >= thresholds.dullness_votes
    conflict = agitation and dullness
    if conflict:
        log.warning("agitation and dullness both fired at t=%d; reporting neither",
                    features.t_ms)
        agitation = dullness = False
    return SomaticState(features.t_ms, agitation, dullness, z, conflict)

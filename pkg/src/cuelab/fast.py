"""Layer-1 EEG features on 500 ms windows.

Nothing in this module can see IBI, respiration, IMU or GSR data:
:func:`extract_fast_features` refuses any window that is not an EEG window,
and :class:`FastFeatureVector` has a fixed, closed set of fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
import scipy.signal as sps

from .errors import DataError, DegenerateWindow, LayerViolation
from .signal import (ALPHA, BETA, REQUIRED_EEG, THETA, StreamBuffer, StreamId, Window,
                     _butter_sos, band_power, bandpass, instantaneous_phase,
                     periodogram, segment_windows)

WIN_MS = 500
STEP_MS = 250

FEATURE_NAMES = (
    "faa",
    "plv_theta",
    "tbr_fz",
    "tbr_cz",
    "hjorth_mobility",
    "hjorth_complexity",
)


@dataclass(frozen=True, slots=True)
class FastFeatureVector:
    t_ms: int
    faa: float
    plv_theta: float
    tbr_fz: float
    tbr_cz: float
    hjorth_mobility: float
    hjorth_complexity: float
    quality_flag: bool

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=float)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def absent(cls, t_ms: int) -> "FastFeatureVector":
        nan = math.nan
        return cls(t_ms, nan, nan, nan, nan, nan, nan, False)


def frontal_alpha_asymmetry(win: Window) -> float:
    """ln alpha power at Fp2 minus ln alpha power at Fp1."""
    right = band_power(win.channel("Fp2"), ALPHA, win.sample_rate)
    left = band_power(win.channel("Fp1"), ALPHA, win.sample_rate)
    if right <= 0 or left <= 0:
        raise DegenerateWindow("zero alpha power on a frontal channel")
    return math.log(right) - math.log(left)


def phase_locking_value(phase_a: np.ndarray, phase_b: np.ndarray) -> float:
    """Magnitude of the mean unit phasor of the phase difference."""
    dphi = np.asarray(phase_a) - np.asarray(phase_b)
    if dphi.size == 0:
        raise DegenerateWindow("empty phase series")
    plv = abs(np.mean(np.exp(1j * dphi)))
    return float(min(1.0, max(0.0, plv)))


def theta_plv(win: Window) -> float:
    fs = win.sample_rate
    fz = bandpass(win.channel("Fz"), THETA, fs)
    cz = bandpass(win.channel("Cz"), THETA, fs)
    return phase_locking_value(instantaneous_phase(fz), instantaneous_phase(cz))


def theta_beta_ratio(win: Window, channel: str) -> float:
    if channel not in ("Fz", "Cz"):
        raise ValueError("theta/beta ratio is defined on Fz or Cz only")
    x = win.channel(channel)
    beta = band_power(x, BETA, win.sample_rate)
    if beta <= 0:
        raise DegenerateWindow(f"zero beta power on {channel}")
    return band_power(x, THETA, win.sample_rate) / beta


def _mobility(x: np.ndarray, sample_rate: float) -> float:
    var = np.var(x)
    if var == 0:
        raise DegenerateWindow("zero variance")
    dx = np.diff(x) * sample_rate
    return math.sqrt(np.var(dx) / var)


def hjorth(win_channel: np.ndarray, sample_rate: float) -> tuple[float, float]:
    """Hjorth mobility (s^-1) and complexity of one channel."""
    x = np.asarray(win_channel, dtype=float)
    if x.size < 3:
        raise DegenerateWindow("need at least 3 samples")
    mobility = _mobility(x, sample_rate)
    complexity = _mobility(np.diff(x) * sample_rate, sample_rate) / mobility
    return mobility, complexity


def extract_fast_features(win: Window) -> FastFeatureVector:
    """Compose the Layer-1 features; degenerate windows come back flagged."""
    if StreamId(win.stream_id) is not StreamId.EEG:
        raise LayerViolation(StreamId(win.stream_id).value,
                             "fast features accept EEG windows only")
    missing = [c for c in REQUIRED_EEG if c not in win.channels]
    if missing:
        raise ValueError(f"window lacks required channels {missing}")
    t_ms = win.end_ms
    try:
        faa = frontal_alpha_asymmetry(win)
        plv = theta_plv(win)
        tbr_fz = theta_beta_ratio(win, "Fz")
        tbr_cz = theta_beta_ratio(win, "Cz")
        mob_fz, cx_fz = hjorth(win.channel("Fz"), win.sample_rate)
        mob_cz, cx_cz = hjorth(win.channel("Cz"), win.sample_rate)
    except DataError:
        return FastFeatureVector.absent(t_ms)
    return FastFeatureVector(
        t_ms=t_ms,
        faa=faa,
        plv_theta=plv,
        tbr_fz=tbr_fz,
        tbr_cz=tbr_cz,
        hjorth_mobility=(mob_fz + mob_cz) / 2,
        hjorth_complexity=(cx_fz + cx_cz) / 2,
        quality_flag=True,
    )


def _band_sum(freqs, spec, band):
    sel = (freqs >= band.lo_hz - 1e-9) & (freqs <= band.hi_hz + 1e-9)
    return spec[..., sel].sum(axis=-1)


def _hjorth_rows(x: np.ndarray, fs: float):
    dx = np.diff(x, axis=-1) * fs
    ddx = np.diff(dx, axis=-1) * fs
    var, vdx, vddx = np.var(x, axis=-1), np.var(dx, axis=-1), np.var(ddx, axis=-1)
    ok = (var > 0) & (vdx > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mob = np.sqrt(vdx / var)
        comp = np.sqrt(vddx / vdx) / mob
    return mob, comp, ok


def extract_fast_features_batch(buffer: StreamBuffer, win_ms: int = WIN_MS,
                                step_ms: int = STEP_MS) -> list[FastFeatureVector]:
    """Vectorised :func:`extract_fast_features` over every window of ``buffer``.

    Results agree with the per-window path to floating-point rounding.
    """
    if StreamId(buffer.stream_id) is not StreamId.EEG:
        raise LayerViolation(StreamId(buffer.stream_id).value,
                             "fast features accept EEG buffers only")
    missing = [c for c in REQUIRED_EEG if c not in buffer.channels]
    if missing:
        raise ValueError(f"buffer lacks required channels {missing}")
    windows = segment_windows(buffer, win_ms, step_ms)
    fs = buffer.sample_rate
    for band in (THETA, ALPHA, BETA):
        band.check(fs)
    pick = [buffer.channels.index(c) for c in ("Fp1", "Fp2", "Fz", "Cz")]
    x = np.stack([w.data[pick] for w in windows]).astype(float)  # (W, 4, n)
    ok = np.all(np.ptp(x, axis=-1) > 0, axis=1) & (x.shape[-1] >= 3)
    # degenerate rows are replaced by a ramp so the vector maths stays finite
    x[~ok] = np.linspace(-1.0, 1.0, x.shape[-1])
    freqs, spec = periodogram(x, fs)
    alpha = _band_sum(freqs, spec, ALPHA)
    theta = _band_sum(freqs, spec, THETA)
    beta = _band_sum(freqs, spec, BETA)
    ok &= (alpha[:, 0] > 0) & (alpha[:, 1] > 0) & np.all(beta[:, 2:] > 0, axis=1)
    mid = x[:, 2:]
    sos = _butter_sos(4, THETA.lo_hz, THETA.hi_hz, fs)
    filt = sps.sosfiltfilt(sos, mid - mid.mean(axis=-1, keepdims=True), axis=-1)
    ok &= np.all(np.ptp(filt, axis=-1) > 0, axis=1)
    phase = np.angle(sps.hilbert(filt, axis=-1))
    phase[phase <= -np.pi] = np.pi
    plv = np.clip(np.abs(np.mean(np.exp(1j * (phase[:, 0] - phase[:, 1])), axis=-1)), 0, 1)
    mob, comp, hj_ok = _hjorth_rows(mid, fs)
    ok &= np.all(hj_ok, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        faa = np.log(alpha[:, 1]) - np.log(alpha[:, 0])
        tbr = theta[:, 2:] / beta[:, 2:]
    out = []
    for i, w in enumerate(windows):
        if not ok[i]:
            out.append(FastFeatureVector.absent(w.end_ms))
            continue
        out.append(FastFeatureVector(
            w.end_ms, float(faa[i]), float(plv[i]), float(tbr[i, 0]), float(tbr[i, 1]),
            float((mob[i, 0] + mob[i, 1]) / 2), float((comp[i, 0] + comp[i, 1]) / 2), True))
    return out

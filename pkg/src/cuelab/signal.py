"""Time-series containers, windowing and the DSP primitives both feature paths use.

All timestamps are integer milliseconds from session start.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import signal as sps

from .errors import BufferTooShort, DegenerateWindow, ZeroVariance


class StreamId(str, enum.Enum):
    EEG = "EEG"
    IBI = "IBI"
    RESP = "RESP"
    IMU = "IMU"
    GSR = "GSR"


EEG_CHANNELS = ("Fp1", "Fp2", "Fz", "Cz", "TP9", "TP10")
REQUIRED_EEG = ("Fp1", "Fp2", "Fz", "Cz")
IMU_CHANNELS = ("ax", "ay", "az", "gx", "gy", "gz")


@dataclass(frozen=True)
class SampleFrame:
    t_ms: int
    stream_id: StreamId
    channel_values: tuple[float, ...]


@dataclass(frozen=True)
class ChannelLayout:
    eeg_channels: tuple[str, ...] = EEG_CHANNELS
    sample_rate_hz: dict = field(
        default_factory=lambda: {
            StreamId.EEG: 256.0,
            StreamId.RESP: 25.0,
            StreamId.IMU: 50.0,
            StreamId.GSR: 4.0,
        }
    )

    def __post_init__(self):
        unknown = set(self.eeg_channels) - set(EEG_CHANNELS)
        if unknown:
            raise ValueError(f"unknown EEG channels: {sorted(unknown)}")
        missing = [c for c in REQUIRED_EEG if c not in self.eeg_channels]
        if missing:
            raise ValueError(f"layout lacks required EEG channels {missing}")
        for stream, rate in self.sample_rate_hz.items():
            if rate <= 0:
                raise ValueError(f"sample rate for {stream} must be positive")
        if self.sample_rate_hz.get(StreamId.EEG, 0) < 128:
            raise ValueError("EEG sample rate must be at least 128 Hz")


@dataclass(frozen=True)
class BandSpec:
    name: str
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not 0 < self.lo_hz < self.hi_hz:
            raise ValueError(f"band {self.name}: need 0 < lo < hi")

    def check(self, sample_rate: float) -> None:
        if self.hi_hz >= sample_rate / 2:
            raise ValueError(
                f"band {self.name} upper edge {self.hi_hz} Hz is not below "
                f"Nyquist ({sample_rate / 2} Hz)"
            )


THETA = BandSpec("theta", 4.0, 8.0)
ALPHA = BandSpec("alpha", 8.0, 12.0)
BETA = BandSpec("beta", 13.0, 30.0)
LF = BandSpec("LF", 0.04, 0.15)
HF = BandSpec("HF", 0.15, 0.40)
RESP_BAND = BandSpec("resp_band", 0.05, 0.5)


class StreamBuffer:
    """Fixed-capacity ring buffer of uniformly sampled multichannel data.

    Oldest samples are overwritten once ``capacity`` is reached; the
    timestamp of the oldest retained sample is tracked so windows keep
    session-clock start times.
    """

    def __init__(self, stream_id: StreamId, channels: Sequence[str],
                 sample_rate: float, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.stream_id = StreamId(stream_id)
        self.channels = tuple(channels)
        self.sample_rate = float(sample_rate)
        self.capacity = int(capacity)
        self._data = np.zeros((self.capacity, len(self.channels)))
        self._ptr = 0
        self._count = 0
        self._t_first: int | None = None
        self._t_last: int | None = None
        self._n_total = 0

    def __len__(self) -> int:
        return self._count

    @property
    def t0_ms(self) -> int:
        """Session time of the oldest retained sample."""
        if self._t_first is None:
            return 0
        dropped = self._n_total - self._count
        return self._t_first + int(round(dropped * 1000.0 / self.sample_rate))

    @property
    def span_ms(self) -> int:
        return int(math.floor(self._count * 1000.0 / self.sample_rate + 1e-9))

    def append(self, frame: SampleFrame) -> None:
        if StreamId(frame.stream_id) is not self.stream_id:
            raise ValueError(
                f"frame from {frame.stream_id} pushed into {self.stream_id} buffer"
            )
        if len(frame.channel_values) != len(self.channels):
            raise ValueError("channel count changed within a stream")
        if self._t_last is not None and frame.t_ms < self._t_last:
            raise ValueError("timestamps must be non-decreasing within a stream")
        if self._t_first is None:
            self._t_first = int(frame.t_ms)
        self._t_last = int(frame.t_ms)
        self._data[self._ptr] = frame.channel_values
        self._advance(1)

    def extend(self, t0_ms: int, block: np.ndarray) -> None:
        """Append a (n_samples, n_channels) block whose first sample is at ``t0_ms``."""
        block = np.asarray(block, dtype=float)
        if block.ndim == 1:
            block = block[:, None]
        if block.shape[1] != len(self.channels):
            raise ValueError("channel count changed within a stream")
        n = block.shape[0]
        if n == 0:
            return
        if self._t_last is not None and t0_ms < self._t_last:
            raise ValueError("timestamps must be non-decreasing within a stream")
        if self._t_first is None:
            self._t_first = int(t0_ms)
        self._t_last = int(t0_ms + round((n - 1) * 1000.0 / self.sample_rate))
        if n >= self.capacity:
            self._data[:] = block[-self.capacity:]
            self._ptr = 0
            self._n_total += n
            self._count = self.capacity
            return
        end = self._ptr + n
        if end <= self.capacity:
            self._data[self._ptr:end] = block
        else:
            split = self.capacity - self._ptr
            self._data[self._ptr:] = block[:split]
            self._data[: end - self.capacity] = block[split:]
        self._advance(n)

    def _advance(self, n: int) -> None:
        self._ptr = (self._ptr + n) % self.capacity
        self._n_total += n
        self._count = min(self._count + n, self.capacity)

    def view(self) -> np.ndarray:
        """Chronologically ordered copy of the retained samples, shape (n, channels)."""
        if self._count < self.capacity:
            return self._data[: self._count].copy()
        return np.concatenate((self._data[self._ptr:], self._data[: self._ptr]))

    def frames(self) -> Iterable[SampleFrame]:
        t0 = self.t0_ms
        for i, row in enumerate(self.view()):
            t = t0 + int(round(i * 1000.0 / self.sample_rate))
            yield SampleFrame(t, self.stream_id, tuple(float(v) for v in row))

    @classmethod
    def from_array(cls, stream_id: StreamId, channels: Sequence[str],
                   sample_rate: float, data: np.ndarray, t0_ms: int = 0) -> "StreamBuffer":
        data = np.asarray(data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        buf = cls(stream_id, channels, sample_rate, max(1, data.shape[0]))
        buf.extend(t0_ms, data)
        return buf


@dataclass(frozen=True)
class Window:
    start_ms: int
    len_ms: int
    channels: tuple[str, ...]
    data: np.ndarray  # (n_channels, n_samples)
    sample_rate: float
    stream_id: StreamId = StreamId.EEG

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.len_ms

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.data[self.channels.index(name)]
        except ValueError:
            raise KeyError(f"window has no channel {name!r}") from None


def _n_samples(ms: float, sample_rate: float) -> int:
    return int(round(ms / 1000.0 * sample_rate))


def _first_index(ms: float, sample_rate: float) -> int:
    return int(math.floor(ms * sample_rate / 1000.0 + 1e-9))


def segment_windows(buffer: StreamBuffer, win_ms: int, step_ms: int) -> list[Window]:
    """Cut ``buffer`` into windows of ``win_ms`` starting every ``step_ms``."""
    if step_ms < 1 or win_ms < 1:
        raise ValueError("win_ms and step_ms must be >= 1")
    span = buffer.span_ms
    if span < win_ms:
        raise BufferTooShort(f"buffer spans {span} ms, window needs {win_ms} ms")
    data = buffer.view().T
    fs = buffer.sample_rate
    n_win = _n_samples(win_ms, fs)
    t0 = buffer.t0_ms
    windows = []
    for offset in range(0, span - win_ms + 1, step_ms):
        i0 = _first_index(offset, fs)
        windows.append(Window(t0 + offset, win_ms, buffer.channels,
                              data[:, i0:i0 + n_win], fs, buffer.stream_id))
    return windows


def _check_nondegenerate(x: np.ndarray) -> None:
    x = np.asarray(x)
    if x.shape[-1] < 2 or np.any(np.ptp(x, axis=-1) == 0):
        raise DegenerateWindow("window has no variation")


def detrend_taper(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Remove mean and linear trend along the last axis, then apply a Hann taper."""
    x = sps.detrend(np.asarray(x, dtype=float), axis=-1, type="linear")
    taper = sps.windows.hann(x.shape[-1], sym=False)
    return x * taper, taper


def periodogram(x: np.ndarray, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Tapered one-sided periodogram in power-per-bin units.

    Scaled so the bins sum to the taper-weighted variance of the detrended
    input; a unit-amplitude sinusoid therefore carries 0.5 units^2.
    """
    xw, taper = detrend_taper(x)
    n = xw.shape[-1]
    spec = np.abs(np.fft.rfft(xw, axis=-1)) ** 2 / (n * np.sum(taper ** 2))
    if n % 2 == 0:
        spec[..., 1:-1] *= 2.0
    else:
        spec[..., 1:] *= 2.0
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    return freqs, spec


def band_power(window_channel: np.ndarray, band: BandSpec, sample_rate: float):
    """Power of ``window_channel`` inside ``band`` (inclusive edges).

    Accepts a 1-D signal or a stack of signals along the last axis.
    """
    x = np.asarray(window_channel, dtype=float)
    _check_nondegenerate(x)
    band.check(sample_rate)
    freqs, spec = periodogram(x, sample_rate)
    sel = (freqs >= band.lo_hz - 1e-9) & (freqs <= band.hi_hz + 1e-9)
    power = spec[..., sel].sum(axis=-1)
    return float(power) if np.ndim(power) == 0 else power


def bandpass(channel: np.ndarray, band: BandSpec, sample_rate: float,
             order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth band-pass; output has the input's length."""
    x = np.asarray(channel, dtype=float)
    band.check(sample_rate)
    if x.size and not np.any(x):
        return np.zeros_like(x)
    _check_nondegenerate(x)
    sos = _butter_sos(order, band.lo_hz, band.hi_hz, sample_rate)
    return sps.sosfiltfilt(sos, x - x.mean(axis=-1, keepdims=True), axis=-1)


_SOS_CACHE: dict = {}


def _butter_sos(order, lo, hi, fs):
    key = (order, lo, hi, fs)
    if key not in _SOS_CACHE:
        _SOS_CACHE[key] = sps.butter(order, [lo, hi], btype="bandpass",
                                     fs=fs, output="sos")
    return _SOS_CACHE[key]


def instantaneous_phase(channel: np.ndarray) -> np.ndarray:
    """Phase of the analytic signal, in (-pi, pi]."""
    x = np.asarray(channel, dtype=float)
    _check_nondegenerate(x)
    phase = np.angle(sps.hilbert(x, axis=-1))
    phase[phase <= -np.pi] = np.pi
    return phase


def zscore(value: float, baseline_mean: float, baseline_sd: float) -> float:
    if baseline_sd == 0:
        raise ZeroVariance("baseline standard deviation is zero")
    if baseline_sd < 0:
        raise ValueError("baseline standard deviation must be positive")
    return (value - baseline_mean) / baseline_sd

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuelab.errors import BufferTooShort, DegenerateWindow, ZeroVariance
from cuelab.signal import (ALPHA, BETA, THETA, BandSpec, ChannelLayout, SampleFrame,
                           StreamBuffer, StreamId, band_power, bandpass,
                           instantaneous_phase, periodogram, segment_windows, zscore)

from conftest import FS, tone


def dft_band_power(x, lo, hi, fs):
    """Brute-force oracle: linear detrend, Hann taper, direct DFT sums per bin."""
    x = np.asarray(x, dtype=float)
    n = x.size
    idx = np.arange(n)
    slope, icpt = np.polyfit(idx, x, 1)
    x = x - (slope * idx + icpt)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * idx / n)
    xw = x * w
    norm = n * np.sum(w * w)
    total = 0.0
    for k in range(n // 2 + 1):
        f = k * fs / n
        if lo - 1e-9 <= f <= hi + 1e-9:
            re = sum(xw[j] * math.cos(2 * math.pi * k * j / n) for j in range(n))
            im = sum(xw[j] * math.sin(2 * math.pi * k * j / n) for j in range(n))
            p = (re * re + im * im) / norm
            if 0 < k < n / 2:
                p *= 2
            total += p
    return total


def test_band_power_unit_sinusoid_is_half():
    assert band_power(tone(6), THETA, FS) == pytest.approx(0.5, rel=0.05)


@pytest.mark.parametrize("seed", range(5))
def test_band_power_matches_direct_dft(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(128) + tone(10, amp=2.0)
    for band in (THETA, ALPHA, BETA):
        assert band_power(x, band, FS) == pytest.approx(
            dft_band_power(x, band.lo_hz, band.hi_hz, FS), rel=0.05)


def test_band_power_white_noise_below_variance():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(128)
    total = sum(band_power(x, b, FS) for b in (THETA, ALPHA, BETA))
    freqs, spec = periodogram(x, FS)
    assert total <= spec.sum()


def test_parseval_over_disjoint_bands():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(128)
    freqs, spec = periodogram(x, FS)
    edges = np.arange(0, 128 + 1, 2.0)
    # half-open bins avoid double-counting shared edges
    parts = [spec[(freqs >= a) & (freqs < b)].sum() for a, b in zip(edges[:-1], edges[1:])]
    parts.append(spec[freqs >= 128].sum())
    from scipy.signal import detrend
    xd = detrend(x)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(128) / 128)
    weighted_var = np.sum((xd * w) ** 2) / np.sum(w * w)
    assert sum(parts) == pytest.approx(weighted_var, rel=0.02)


def test_band_power_constant_is_degenerate():
    with pytest.raises(DegenerateWindow):
        band_power(np.full(128, 3.0), THETA, FS)


def test_band_power_is_pure():
    x = np.random.default_rng(3).standard_normal(128)
    assert band_power(x, THETA, FS) == band_power(x.copy(), THETA, FS)


def amplitude(x):
    mid = x[len(x) // 4: 3 * len(x) // 4]
    return math.sqrt(2 * np.mean(mid ** 2))


def test_bandpass_keeps_in_band():
    x = tone(6, ms=2000)
    y = bandpass(x, THETA, FS)
    assert y.shape == x.shape
    assert amplitude(y) == pytest.approx(1.0, rel=0.2)


def test_bandpass_rejects_out_of_band():
    y = bandpass(tone(30, ms=2000), THETA, FS)
    assert amplitude(y) <= 0.1


def test_bandpass_octave_attenuation():
    # 16 Hz is one octave above theta's upper edge
    y = bandpass(tone(16, ms=2000), THETA, FS)
    assert 20 * math.log10(amplitude(y)) <= -20


def test_bandpass_zero_in_zero_out():
    assert not np.any(bandpass(np.zeros(128), THETA, FS))


def test_phase_increment_of_sinusoid():
    ph = instantaneous_phase(tone(6, ms=2000))
    d = np.diff(np.unwrap(ph))[64:-64]
    assert np.allclose(d, 2 * np.pi * 6 / FS, rtol=0.02)
    assert np.all(ph > -np.pi) and np.all(ph <= np.pi)


def test_cos_sin_quadrature():
    t = np.arange(512) / FS
    a = instantaneous_phase(np.cos(2 * np.pi * 6 * t))
    b = instantaneous_phase(np.sin(2 * np.pi * 6 * t))
    diff = np.angle(np.exp(1j * (a - b)))[64:-64]
    assert np.allclose(diff, np.pi / 2, atol=0.05)


def test_phase_of_zero_is_degenerate():
    with pytest.raises(DegenerateWindow):
        instantaneous_phase(np.zeros(64))


def test_zscore_examples():
    assert zscore(5, 5, 2) == 0
    assert zscore(9, 5, 2) == 2.0
    with pytest.raises(ZeroVariance):
        zscore(1, 5, 0)


def test_band_spec_invariants():
    with pytest.raises(ValueError):
        BandSpec("bad", 8, 4)
    with pytest.raises(ValueError):
        band_power(np.random.default_rng(0).standard_normal(64), BandSpec("hi", 100, 200), FS)


def test_layout_requires_frontal_and_central():
    with pytest.raises(ValueError):
        ChannelLayout(("Fp1", "Fp2", "Fz"))
    with pytest.raises(ValueError):
        ChannelLayout(sample_rate_hz={StreamId.EEG: 100.0})
    ChannelLayout()


def buffer_of(span_ms, fs):
    n = int(math.floor(span_ms * fs / 1000 + 1e-9))
    return StreamBuffer.from_array(StreamId.EEG, ["Fz"], fs, np.arange(n, dtype=float))


def test_segment_examples():
    w = segment_windows(buffer_of(2000, 256), 500, 250)
    assert [x.start_ms for x in w] == list(range(0, 1501, 250))
    assert len(segment_windows(buffer_of(500, 256), 500, 250)) == 1
    with pytest.raises(BufferTooShort):
        segment_windows(buffer_of(499, 256), 500, 250)


@settings(max_examples=50, deadline=None)
@given(span=st.integers(500, 20_000), fs=st.sampled_from([128.0, 200.0, 250.0, 256.0, 512.0]))
def test_segment_count_formula(span, fs):
    buf = buffer_of(span, fs)
    windows = segment_windows(buf, 500, 250)
    assert len(windows) == (buf.span_ms - 500) // 250 + 1
    starts = [w.start_ms for w in windows]
    assert starts == [250 * k for k in range(len(windows))]
    n = int(round(0.5 * fs))
    assert all(w.data.shape[1] == n for w in windows)
    assert windows[-1].end_ms <= buf.span_ms


def test_ring_buffer_keeps_latest():
    buf = StreamBuffer(StreamId.IBI, ["ibi"], 4.0, capacity=3)
    for k in range(5):
        buf.append(SampleFrame(k * 250, StreamId.IBI, (float(k),)))
    assert buf.view()[:, 0].tolist() == [2.0, 3.0, 4.0]
    assert buf.t0_ms == 500
    with pytest.raises(ValueError):
        buf.append(SampleFrame(0, StreamId.IBI, (1.0,)))
    with pytest.raises(ValueError):
        buf.append(SampleFrame(2000, StreamId.IBI, (1.0, 2.0)))

import dataclasses
import math

import numpy as np
import pytest

from cuelab.errors import DegenerateWindow, LayerViolation
from cuelab.fast import (FEATURE_NAMES, FastFeatureVector, extract_fast_features,
                         extract_fast_features_batch, frontal_alpha_asymmetry, hjorth,
                         phase_locking_value, theta_beta_ratio, theta_plv)
from cuelab.signal import StreamId, segment_windows
from cuelab.sim import MentalState, generate_signals

from conftest import FS, eeg_buffer, eeg_window, tone


def test_faa_symmetric_is_zero():
    w = eeg_window({"Fp1": tone(10), "Fp2": tone(10)})
    assert frontal_alpha_asymmetry(w) == pytest.approx(0.0, abs=1e-12)


def test_faa_double_power_right():
    w = eeg_window({"Fp1": tone(10), "Fp2": math.sqrt(2) * tone(10)})
    assert frontal_alpha_asymmetry(w) == pytest.approx(math.log(2), rel=1e-9)


def test_faa_flat_channel():
    w = eeg_window({"Fp1": np.zeros(128), "Fp2": tone(10)})
    with pytest.raises(DegenerateWindow):
        frontal_alpha_asymmetry(w)


def test_plv_identical_channels_is_one():
    x = np.random.default_rng(0).standard_normal(128)
    assert theta_plv(eeg_window({"Fz": x, "Cz": x})) == 1.0


def test_plv_delayed_copy():
    rng = np.random.default_rng(1)
    t = np.arange(140) / FS
    vals = []
    for _ in range(50):
        x = (np.sin(2 * np.pi * 6 * t + rng.uniform(0, 2 * np.pi))
             + 0.5 * np.sin(2 * np.pi * 5 * t + rng.uniform(0, 2 * np.pi))
             + 0.1 * rng.standard_normal(t.size))
        vals.append(theta_plv(eeg_window({"Fz": x[3:131], "Cz": x[:128]})))
    assert np.mean(vals) >= 0.95
    assert theta_plv(eeg_window({"Fz": tone(6, phase=0.3), "Cz": tone(6)})) >= 0.95


def test_plv_random_phase_monte_carlo():
    # mean resultant length of N independent uniform phasors
    rng = np.random.default_rng(2)
    vals = [phase_locking_value(rng.uniform(-np.pi, np.pi, 128), rng.uniform(-np.pi, np.pi, 128))
            for _ in range(1000)]
    assert np.mean(vals) == pytest.approx(1 / math.sqrt(128), abs=0.03)
    assert np.mean(vals) == pytest.approx(math.sqrt(math.pi / (4 * 128)), abs=0.01)


def test_tbr_examples():
    rng = np.random.default_rng(3)
    noise = 0.01 * rng.standard_normal(128)
    assert theta_beta_ratio(eeg_window({"Fz": tone(6) + noise}), "Fz") >= 10
    assert theta_beta_ratio(eeg_window({"Cz": tone(20) + noise}), "Cz") <= 0.1
    with pytest.raises(ValueError):
        theta_beta_ratio(eeg_window({}), "Fp1")


def test_tbr_equal_powers():
    from cuelab.signal import BETA, THETA, band_power
    x = tone(6) + tone(20)
    w = eeg_window({"Fz": x})
    expected = band_power(x, THETA, FS) / band_power(x, BETA, FS)
    assert expected == pytest.approx(1.0, rel=0.05)
    assert theta_beta_ratio(w, "Fz") == pytest.approx(expected)


def test_hjorth_sinusoid():
    mob, comp = hjorth(tone(10, ms=2000), FS)
    assert mob == pytest.approx(2 * FS * math.sin(math.pi * 10 / FS), rel=0.02)
    assert comp == pytest.approx(1.0, rel=0.02)
    for f in (3, 20, 40):
        assert hjorth(tone(f, ms=2000), FS)[1] == pytest.approx(1.0, rel=0.02)


def test_hjorth_hand_evaluated():
    x = np.array([0.0, 1.0, 0.0, -2.0, 1.0])
    dx = np.diff(x) * 10
    ddx = np.diff(dx) * 10
    m_x = math.sqrt(np.var(dx) / np.var(x))
    m_dx = math.sqrt(np.var(ddx) / np.var(dx))
    mob, comp = hjorth(x, 10)
    assert mob == pytest.approx(m_x, rel=1e-12)
    assert comp == pytest.approx(m_dx / m_x, rel=1e-12)


def test_hjorth_white_noise_complexity_above_one():
    rng = np.random.default_rng(4)
    vals = [hjorth(rng.standard_normal(128), FS)[1] for _ in range(200)]
    assert np.mean(vals) > 1


def test_hjorth_flat():
    with pytest.raises(DegenerateWindow):
        hjorth(np.ones(64), FS)


def settled_window(seed=0):
    rec = generate_signals(MentalState.SETTLED, None, 2000, seed)
    return segment_windows(rec.streams.eeg, 500, 250)[2]


def test_extract_on_settled_window():
    fv = extract_fast_features(settled_window())
    assert fv.quality_flag
    assert 0 <= fv.plv_theta <= 1
    assert all(math.isfinite(v) for v in fv.as_array())
    assert fv.t_ms == 1000


def test_extract_all_zero_window_is_flagged():
    w = eeg_window({c: np.zeros(128) for c in ("Fp1", "Fp2", "Fz", "Cz", "TP9", "TP10")})
    fv = extract_fast_features(w)
    assert not fv.quality_flag
    assert all(math.isnan(v) for v in fv.as_array())


def test_scale_invariance():
    w = settled_window(1)
    a = extract_fast_features(w).as_array()
    b = extract_fast_features(dataclasses.replace(w, data=3 * w.data)).as_array()
    assert np.allclose(a, b, rtol=1e-9, atol=1e-12)


def test_vector_fields_are_closed():
    names = {f.name for f in dataclasses.fields(FastFeatureVector)}
    assert names == set(FEATURE_NAMES) | {"t_ms", "quality_flag"}
    slow = {"rmssd_ms", "lf_hf", "resp_rate_bpm", "resp_depth", "resp_irregularity",
            "head_pitch_deg", "movement_jitter", "gsr"}
    assert not names & slow
    fv = FastFeatureVector.absent(0)
    with pytest.raises((AttributeError, TypeError, dataclasses.FrozenInstanceError)):
        fv.rmssd_ms = 1.0


@pytest.mark.parametrize("stream", [StreamId.IBI, StreamId.RESP, StreamId.IMU, StreamId.GSR])
def test_non_eeg_window_rejected(stream):
    w = eeg_window({})
    with pytest.raises(LayerViolation):
        extract_fast_features(dataclasses.replace(w, stream_id=stream))


def test_batch_matches_per_window():
    rec = generate_signals([MentalState.SETTLED] * 8 + [MentalState.WANDERING] * 8, None,
                           4000, 5)
    buf = rec.streams.eeg
    batch = extract_fast_features_batch(buf)
    single = [extract_fast_features(w) for w in segment_windows(buf, 500, 250)]
    assert [f.t_ms for f in batch] == [f.t_ms for f in single]
    for a, b in zip(batch, single):
        assert a.quality_flag == b.quality_flag
        assert np.allclose(a.as_array(), b.as_array(), rtol=1e-9, atol=1e-12)


def test_batch_flags_degenerate_rows():
    data = np.random.default_rng(0).standard_normal((512, 6))
    data[128:256] = 0.0
    fvs = extract_fast_features_batch(eeg_buffer(data))
    flags = [f.quality_flag for f in fvs]
    assert flags[2] is False and flags[0] is True
    single = [extract_fast_features(w).quality_flag
              for w in segment_windows(eeg_buffer(data), 500, 250)]
    assert flags == single


def test_batch_rejects_slow_buffer():
    from cuelab.signal import StreamBuffer
    buf = StreamBuffer.from_array(StreamId.RESP, ["resp"], 25.0, np.zeros(100))
    with pytest.raises(LayerViolation):
        extract_fast_features_batch(buf)

import dataclasses
import inspect

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuelab.cue import (CUE_TOKEN, FAST_EEG_SOURCE, CueConfig, CueEngine, CueEvent, CueKind,
                        Layer1Registry, SourceDescriptor, register_layer1_source,
                        render_cue, step)
from cuelab.errors import ConfigError, LayerViolation, NonMonotonicTime
from cuelab.signal import StreamId


def test_two_confirmed_windows_cue():
    eng = CueEngine()
    assert eng.step(0, 0.9) is None
    ev = eng.step(250, 0.9)
    assert ev is not None and ev.t_ms == 250
    assert ev.kind is CueKind.DISTRACTION_DETECTED


def test_refractory_blocks_second_cue():
    eng = CueEngine()
    eng.step(0, 0.9), eng.step(250, 0.9)
    eng.step(2000, 0.1)
    assert eng.step(5000, 0.9) is None and eng.step(5250, 0.9) is None


def test_settled_session_never_cues():
    eng = CueEngine()
    assert all(eng.step(t, 0.1) is None for t in range(0, 600_000, 250))


def test_hysteresis_requires_release():
    eng = CueEngine(CueConfig(refractory_ms=0))
    eng.step(0, 0.9), eng.step(250, 0.9)
    # stays above theta_off: no re-arm, no cue
    assert all(eng.step(t, p) is None for t, p in ((500, 0.5), (750, 0.9), (1000, 0.9)))
    eng.step(1250, 0.3)
    eng.step(1500, 0.9)
    assert eng.step(1750, 0.9) is not None


def test_non_monotonic_time():
    eng = CueEngine()
    eng.step(100, 0.1)
    with pytest.raises(NonMonotonicTime):
        eng.step(100, 0.1)
    with pytest.raises(NonMonotonicTime):
        CueEngine().run([0, 250, 200], [0.1, 0.1, 0.1])


def test_config_invariants():
    for bad in (dict(theta_on=0.4, theta_off=0.5), dict(theta_off=0.0), dict(theta_on=1.2),
                dict(refractory_ms=-1)):
        with pytest.raises(ConfigError):
            CueConfig(**bad)


def test_functional_step_checks_config():
    eng = CueEngine()
    with pytest.raises(ConfigError):
        step(0, 0.5, CueConfig(refractory_ms=1), eng)
    assert step(0, 0.5, CueConfig(), eng) is None


def test_render_is_constant():
    a, b = CueEvent(0, 0.81), CueEvent(999, 0.99)
    assert render_cue(a) == render_cue(b) == CUE_TOKEN == "neutral-tone-1"
    assert list(inspect.signature(render_cue).parameters) == ["event"]


def test_event_type_has_no_reward_channel():
    assert [k.value for k in CueKind] == ["distraction_detected"]
    names = {f.name for f in dataclasses.fields(CueEvent)}
    assert names == {"t_ms", "trigger_probability", "kind"}
    with pytest.raises(ValueError):
        CueEvent(0, 0.9, "reward")


def test_register_fast_eeg_ok():
    reg = Layer1Registry()
    register_layer1_source(reg, FAST_EEG_SOURCE)
    assert reg.sources == (FAST_EEG_SOURCE,)


def test_register_rmssd_names_ibi():
    with pytest.raises(LayerViolation) as exc:
        register_layer1_source(Layer1Registry(),
                               SourceDescriptor.for_features("hrv", ["rmssd_ms"]))
    assert exc.value.stream == "IBI"


@pytest.mark.parametrize("feature,stream", [("lf_hf", "IBI"), ("resp_rate_bpm", "RESP"),
                                            ("movement_jitter", "IMU"),
                                            ("head_pitch_deg", "IMU")])
def test_register_mixed_source_rejected(feature, stream):
    src = SourceDescriptor.for_features("mixed", ["faa", "plv_theta", feature])
    with pytest.raises(LayerViolation) as exc:
        Layer1Registry().register(src)
    assert exc.value.stream == stream


def test_register_gsr_rejected():
    src = SourceDescriptor("gsr", frozenset({StreamId.EEG, StreamId.GSR}))
    with pytest.raises(LayerViolation):
        Layer1Registry().register(src)


def check_stream(t, p, cfg, cue_idx):
    prev = None
    for i in cue_idx:
        assert p[i] >= cfg.theta_on
        window = p[i - cfg.min_consecutive_windows + 1: i + 1]
        assert len(window) == cfg.min_consecutive_windows
        assert np.all(window >= cfg.theta_on)
        if prev is not None:
            assert t[i] - t[prev] >= cfg.refractory_ms
        prev = i


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_negative_only_property(data):
    n = data.draw(st.integers(0, 200))
    p = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    t = np.cumsum(data.draw(st.lists(st.integers(1, 3000), min_size=n, max_size=n)),
                  dtype=np.int64)
    off = data.draw(st.floats(0.01, 0.7))
    on = data.draw(st.floats(off + 0.01, 1.0))
    cfg = CueConfig(on, off, data.draw(st.integers(0, 30_000)), data.draw(st.integers(1, 4)))
    events = CueEngine(cfg).run(t, p)
    assert all(e.kind is CueKind.DISTRACTION_DETECTED for e in events)
    idx = [int(np.searchsorted(t, e.t_ms)) for e in events]
    check_stream(t, p, cfg, idx)
    # stepwise and batch paths agree
    eng = CueEngine(cfg)
    stepped = [e for ti, pi in zip(t, p) if (e := eng.step(int(ti), float(pi)))]
    assert stepped == events


def test_run_continues_state():
    cfg = CueConfig()
    t = np.arange(0, 100_000, 250)
    p = np.random.default_rng(0).random(t.size)
    whole = CueEngine(cfg).run(t, p)
    eng = CueEngine(cfg)
    parts = eng.run(t[:150], p[:150]) + eng.run(t[150:], p[150:])
    assert parts == whole

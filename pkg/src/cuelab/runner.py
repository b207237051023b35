"""One simulated session through the full pipeline, recorded as a SessionLog.

The simulator supplies raw streams and honest probe answers. Everything
downstream (fast features, cueing, somatic state, taVNS gating) runs on
the observable streams only. The hidden state sequence is logged as
``agent_truth`` records for evaluation.
"""
from __future__ import annotations

import logging

import numpy as np

from .classifier import ProbeResponse, WanderingModel
from .cue import CueConfig, CueEngine
from .errors import DataError
from .fast import extract_fast_features_batch
from .protocol import Phase, schedule_probes
from .sessionlog import Record, SessionHeader, SessionLog, feature_record
from .signal import THETA, band_power
from .sim import (STEP_MS, STRATEGY_EFFECTS, W_IDX, MentalState,
                  Strategy, _duration_bucket, _rng, _subseed, generate_signals,
                  hazard_rates, simulate_states, state_transitions)
from .somatic import (BaselineStats, IbiSeries, SomaticState, extract_somatic_features,
                      gross_state)
from .stim import StimConfig, StimEpoch, overlaps, start_session, tavns_trigger

log = logging.getLogger(__name__)

KIND_ORDER = {"stim": 0, "agent_truth": 1, "somatic": 2, "feature": 3, "cue": 4, "probe": 5}


def _probe_records(states, duration_ms, seed, unclear_rate=0.05) -> list[Record]:
    rng = _rng(seed, 21)
    out = []
    for t in schedule_probes(duration_ms, _subseed(seed, 22)):
        i = min(t // STEP_MS, len(states) - 1)
        if rng.random() < unclear_rate:
            out.append(Record(t, "probe", {"response": ProbeResponse.UNCLEAR.value}))
        elif states[i] == W_IDX:
            j = i
            while j > 0 and states[j - 1] == W_IDX:
                j -= 1
            out.append(Record(t, "probe", {"response": "wandering",
                                           "bucket": _duration_bucket(t - j * STEP_MS)}))
        else:
            out.append(Record(t, "probe", {"response": "settled"}))
    return out


def _somatic_rows(rec, duration_ms, every_ms, window_ms):
    s = rec.streams
    ibis = s.ibis
    fs_r, fs_i, fs_e = s.resp.sample_rate, s.imu.sample_rate, s.eeg.sample_rate
    resp, imu, eeg = s.resp.view()[:, 0], s.imu.view(), s.eeg.view()
    fz = eeg[:, s.eeg.channels.index("Fz")]
    rows = []
    for t in range(64_000, duration_ms + 1, every_ms):
        past = ibis.t_ms <= t
        r0, r1 = int((t - window_ms) * fs_r / 1000), int(t * fs_r / 1000)
        i0, i1 = int((t - window_ms) * fs_i / 1000), int(t * fs_i / 1000)
        e0, e1 = int((t - window_ms) * fs_e / 1000), int(t * fs_e / 1000)
        try:
            f = extract_somatic_features(
                t, window_ms, IbiSeries(ibis.t_ms[past], ibis.ibi_ms[past]),
                resp[r0:r1], fs_r, imu[i0:i1], fs_i)
            theta = band_power(fz[e0:e1], THETA, fs_e)
        except DataError as exc:
            log.debug("no somatic row at t=%d: %s", t, exc)
            continue
        rows.append((f, theta))
    return rows


def run_simulated_session(session_id: str, phase: Phase | str, seed: int,
                          duration_ms: int = 600_000, strategy: Strategy | None = None,
                          model: WanderingModel | None = None,
                          cue_config: CueConfig = CueConfig(),
                          stim_config: StimConfig | None = None,
                          cueing: bool | None = None, sham: bool = False,
                          somatic_every_ms: int = 5000, somatic_window_ms: int = 20_000,
                          baseline_ms: int = 180_000) -> SessionLog:
    phase = Phase(phase)
    cueing = (phase is Phase.B) if cueing is None else bool(cueing)
    if phase is not Phase.B and cueing:
        raise ValueError("only Phase B sessions can cue")
    strategy = Strategy(strategy) if strategy else None
    stim_on = bool(stim_config and stim_config.enabled and phase is Phase.B)
    if stim_on:
        stim_config = start_session(stim_config)
    header = SessionHeader(session_id, phase.value, cueing, seed, stim_on,
                           stim_config.amplitude_ma if stim_on else None)

    h, r = hazard_rates(strategy, device_present=cueing)
    home = STRATEGY_EFFECTS[strategy].home if strategy else MentalState.SETTLED
    states = simulate_states(home, h, r, duration_ms // STEP_MS, _rng(seed, 20))
    records = [Record(t, "agent_truth", {"state": st})
               for t, st in state_transitions(states)]
    records += _probe_records(states, duration_ms, seed)

    if phase is not Phase.C:
        rec = generate_signals(states, strategy, duration_ms, _subseed(seed, 23))
        epochs: list[StimEpoch] = []
        if stim_on:
            records.append(Record(0, "stim", {"event": "amplitude",
                                              "amplitude_ma": stim_config.amplitude_ma}))
        rows = _somatic_rows(rec, duration_ms, somatic_every_ms, somatic_window_ms)
        base = [(f, th) for f, th in rows if f.t_ms <= baseline_ms]
        baseline = (BaselineStats.from_samples([f for f, _ in base], [th for _, th in base])
                    if len(base) >= 3 else None)
        history: list[SomaticState] = []
        for f, theta in rows:
            payload = {k: v for k, v in f.to_dict().items() if k != "t_ms"}
            payload["theta_power"] = theta
            if baseline is not None and f.t_ms > baseline_ms:
                try:
                    st = gross_state(f, theta, baseline)
                except DataError:
                    st = None
                if st is not None:
                    history.append(st)
                    payload.update(agitation=st.agitation, dullness=st.dullness)
                    if stim_on and (not epochs or f.t_ms >= epochs[-1].end_ms):
                        ep = tavns_trigger(history, stim_config, epochs)
                        if ep is not None and ep.end_ms <= duration_ms:
                            epochs.append(ep)
            records.append(Record(f.t_ms, "somatic", payload))
        for ep in epochs:
            records.append(Record(ep.start_ms, "stim", {"event": "epoch", "end_ms": ep.end_ms,
                                                        "amplitude_ma": ep.amplitude_ma}))

        fvs = [fv for fv in extract_fast_features_batch(rec.streams.eeg)
               if not any(overlaps(fv.t_ms - 500, fv.t_ms, e.start_ms, e.end_ms) for e in epochs)]
        records += [feature_record(fv) for fv in fvs]
        if cueing and model is not None:
            good = [fv for fv in fvs if fv.quality_flag]
            if good:
                p = model.predict_proba(np.array([fv.as_array() for fv in good]))
                engine = CueEngine(cue_config)
                for fv, prob in zip(good, p):
                    ev = engine.step(fv.t_ms, float(prob))
                    if ev is not None:
                        records.append(Record(ev.t_ms, "cue", {
                            "kind": ev.kind.value, "p": ev.trigger_probability,
                            "rendered": not sham}))

    records.sort(key=lambda rc: (rc.t_ms, KIND_ORDER[rc.kind]))
    return SessionLog(header, records)

"""Synthetic physiology and an adaptive simulated practitioner.

The generator emits EEG, IBI, respiration, IMU and GSR streams whose
statistics depend on a hidden mental-state sequence and on the practice
strategy in use. Devices only ever see the observable streams
(:class:`SensorStreams`) and score them through the real feature
pipeline; the hidden states stay in :class:`SimRecording` for ground
truth evaluation.

The practitioner is a softmax bandit over strategies. Each strategy
carries two hazard effects: one while the device is worn and one for
unassisted practice. Only the latter counts towards ``V_target``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .classifier import (ProbeLabel, ProbeResponse, WanderingModel,
                         build_training_set_multi, train)
from .cue import CueConfig, CueEngine, CueEvent
from .errors import NoModel
from .fast import FastFeatureVector, extract_fast_features_batch
from .protocol import (Phase, StudyConfig, TransferVerdict,
                       intervals_from_truth, plan_study, schedule_probes,
                       transfer_test)
from .signal import (ALPHA, BETA, EEG_CHANNELS, IMU_CHANNELS, THETA, StreamBuffer,
                     StreamId, band_power, segment_windows)
from .somatic import IbiSeries, lf_hf_ratio, respiration_features

EEG_FS = 256.0
RESP_FS = 25.0
IMU_FS = 50.0
GSR_FS = 4.0
STEP_MS = 250

# baseline hazards, per second: entering wandering, and returning from it
H0 = 0.03
R0 = 0.05


class MentalState(str, enum.Enum):
    SETTLED = "settled"
    WANDERING = "wandering"
    DROWSY = "drowsy"
    SUPPRESSING = "suppressing"


STATES = tuple(MentalState)
W_IDX = STATES.index(MentalState.WANDERING)


class Strategy(str, enum.Enum):
    GENUINE = "genuine_regulation"
    JAW = "jaw_artefact"
    POSTURE = "posture_trick"
    PACED = "paced_breathing"
    SUPPRESSION = "suppression"
    DROWSINESS = "drowsiness"


STRATEGIES = tuple(Strategy)


@dataclass(frozen=True)
class StrategyEffect:
    home: MentalState
    v_target_effect: float  # hazard effect during unassisted practice
    session_effect: float  # hazard effect while the device is worn
    jaw_bursts: bool = False
    paced: bool = False
    posture: bool = False
    lf_scale: float = 1.0
    gsr_scale: float = 1.0


STRATEGY_EFFECTS = {
    Strategy.GENUINE: StrategyEffect(MentalState.SETTLED, -0.5, -0.5),
    Strategy.JAW: StrategyEffect(MentalState.SETTLED, 0.0, 0.0, jaw_bursts=True),
    Strategy.POSTURE: StrategyEffect(MentalState.SETTLED, 0.0, 0.0, posture=True),
    Strategy.PACED: StrategyEffect(MentalState.SETTLED, 0.0, -0.1, paced=True),
    Strategy.SUPPRESSION: StrategyEffect(MentalState.SUPPRESSING, 0.0, 0.0,
                                         lf_scale=0.3, gsr_scale=0.6),
    Strategy.DROWSINESS: StrategyEffect(MentalState.DROWSY, 0.2, -0.5),
}


def hazard_rates(strategy: Strategy | None, device_present: bool) -> tuple[float, float]:
    """(enter-wandering, leave-wandering) rates per second."""
    if strategy is None:
        return H0, R0
    eff = STRATEGY_EFFECTS[Strategy(strategy)]
    e = eff.session_effect if device_present else eff.v_target_effect
    return H0 * (1 + e), R0 * (1 - e)


def step_probability(rate_per_s: float, step_ms: int = STEP_MS) -> float:
    return 1.0 - math.exp(-rate_per_s * step_ms / 1000.0)


def simulate_states(home: MentalState, h: float, r: float, n_steps: int,
                    rng: np.random.Generator, step_ms: int = STEP_MS,
                    start: MentalState | None = None) -> np.ndarray:
    """Two-state chain between ``home`` and wandering, as state indices per step."""
    p_leave, p_back = step_probability(h, step_ms), step_probability(r, step_ms)
    home_i = STATES.index(MentalState(home))
    cur = STATES.index(MentalState(start)) if start is not None else home_i
    out = np.empty(n_steps, dtype=np.int8)
    i = 0
    while i < n_steps:
        p = p_back if cur == W_IDX else p_leave
        dwell = int(rng.geometric(p)) if p > 0 else n_steps
        out[i:i + dwell] = cur
        i += dwell
        cur = home_i if cur == W_IDX else W_IDX
    return out


def state_transitions(states: np.ndarray, t0_ms: int = 0,
                      step_ms: int = STEP_MS) -> list[tuple[int, str]]:
    """(t_ms, state) at the start and at every change of the sequence."""
    if len(states) == 0:
        return []
    change = np.flatnonzero(np.diff(states)) + 1
    idx = np.concatenate(([0], change))
    out = [(t0_ms + int(i) * step_ms, STATES[states[i]].value) for i in idx]
    out.append((t0_ms + len(states) * step_ms, "end"))
    return out


@dataclass(frozen=True)
class Emission:
    theta_shared: float
    theta_ind: float
    alpha: float
    beta: float
    delta: float
    mean_ibi_ms: float
    resp_hz: float
    resp_amp: float
    pitch_deg: float
    jitter_g: float
    gsr_us: float
    lf_gain: float = 1.0  # sympathetic LF modulation relative to baseline


# amplitudes in microvolts (EEG), ms (IBI), arbitrary units (respiration)
EMISSIONS = {
    MentalState.SETTLED: Emission(9.0, 1.0, 6.0, 3.0, 0.0, 950, 0.20, 1.0, 0.0, 0.005, 5.0),
    MentalState.WANDERING: Emission(0.0, 8.0, 4.0, 6.0, 0.0, 850, 0.25, 0.9, -3.0, 0.015, 6.0, 2.0),
    MentalState.DROWSY: Emission(10.0, 4.0, 4.0, 1.5, 8.0, 1000, 0.17, 0.6, -15.0, 0.008, 4.0, 0.8),
    MentalState.SUPPRESSING: Emission(4.0, 3.0, 3.0, 2.5, 0.0, 900, 0.20, 0.5, 0.0, 0.003, 3.0),
}
PINK_UV = 4.0
JAW_GAIN = 10.0  # +20 dB over the state's beta level
THETA_LAG_S = 0.008
LF_AMP_MS = 20.0
RSA_AMP_MS = 25.0
PACED_RSA_AMP_MS = 60.0
PACED_HZ = 0.1
IBI_NOISE_MS = 8.0

# channel gains for Fp1, Fp2, Fz, Cz, TP9, TP10
THETA_GAIN = np.array([0.5, 0.5, 1.0, 1.0, 0.4, 0.4])
ALPHA_GAIN = np.array([0.5, 0.55, 0.7, 0.8, 1.0, 1.0])
DELTA_GAIN = np.array([0.8, 0.8, 1.0, 1.0, 0.6, 0.6])


@dataclass(frozen=True)
class SensorStreams:
    """What a device can observe."""

    eeg: StreamBuffer
    ibis: IbiSeries
    resp: StreamBuffer
    imu: StreamBuffer
    gsr: StreamBuffer


@dataclass(frozen=True)
class SimRecording:
    streams: SensorStreams
    states: np.ndarray  # hidden state index per step
    strategy: Strategy | None
    t0_ms: int = 0
    step_ms: int = STEP_MS

    def transitions(self) -> list[tuple[int, str]]:
        return state_transitions(self.states, self.t0_ms, self.step_ms)


def _band_noise(rng, shape, fs, lo, hi, lag_s: float = 0.0):
    """Unit-variance Gaussian noise band-limited to [lo, hi] Hz by FFT masking.

    With ``lag_s`` a second, delayed copy of the same realisation is returned.
    """
    n = shape[-1]
    spec = np.fft.rfft(rng.standard_normal(shape), axis=-1)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec = spec * ((f >= lo) & (f <= hi))
    x = np.fft.irfft(spec, n, axis=-1)
    scale = np.std(x, axis=-1, keepdims=True)
    scale[scale == 0] = 1.0
    if not lag_s:
        return x / scale
    lagged = np.fft.irfft(spec * np.exp(-2j * np.pi * f * lag_s), n, axis=-1)
    return x / scale, lagged / scale


def _pink(rng, shape, fs):
    n = shape[-1]
    f = np.fft.rfftfreq(n, 1.0 / fs)
    shaping = np.zeros_like(f)
    shaping[1:] = 1.0 / np.sqrt(f[1:])
    x = np.fft.irfft(np.fft.rfft(rng.standard_normal(shape), axis=-1) * shaping, n, axis=-1)
    return x / np.std(x, axis=-1, keepdims=True)


def _per_sample(values: np.ndarray, states: np.ndarray, n: int, fs: float,
                step_ms: int, smooth_s: float = 0.25) -> np.ndarray:
    idx = np.minimum((np.arange(n) * 1000.0 / fs // step_ms).astype(int), len(states) - 1)
    out = values[states[idx]]
    size = max(1, int(round(smooth_s * fs)))
    return uniform_filter1d(out.astype(float), size, mode="nearest")


def _table(attr: str) -> np.ndarray:
    return np.array([getattr(EMISSIONS[s], attr) for s in STATES], dtype=float)


def _state_sequence(state, duration_ms: int, step_ms: int) -> np.ndarray:
    n_steps = -(-duration_ms // step_ms)
    if isinstance(state, (MentalState, str)):
        return np.full(n_steps, STATES.index(MentalState(state)), dtype=np.int8)
    seq = np.array([STATES.index(MentalState(s)) if isinstance(s, (str, MentalState))
                    else int(s) for s in state], dtype=np.int8)
    if len(seq) < n_steps:
        raise ValueError(f"state sequence covers {len(seq)} steps, need {n_steps}")
    return seq[:n_steps]


def generate_signals(state, strategy: Strategy | None, duration_ms: int, seed: int,
                     t0_ms: int = 0, step_ms: int = STEP_MS) -> SimRecording:
    """Synthesize every stream for ``duration_ms``.

    ``state`` is one :class:`MentalState` or a per-step state sequence.
    ``strategy`` of ``None`` means untrained practice with no modifiers.
    Each stream draws from its own child seed, so switching a strategy
    modifier on leaves the other components unchanged.
    """
    if duration_ms < 1000:
        raise ValueError("duration must be at least 1000 ms")
    states = _state_sequence(state, duration_ms, step_ms)
    eff = STRATEGY_EFFECTS[Strategy(strategy)] if strategy is not None else None
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(12)]

    # EEG
    n = int(round(duration_ms * EEG_FS / 1000))
    n_ch = len(EEG_CHANNELS)
    env = {k: _per_sample(_table(k), states, n, EEG_FS, step_ms)
           for k in ("theta_shared", "theta_ind", "alpha", "beta", "delta")}
    shared, lagged = _band_noise(rngs[1], (n,), EEG_FS, 4.0, 8.0, THETA_LAG_S)
    theta_src = np.tile(shared, (n_ch, 1))
    theta_src[EEG_CHANNELS.index("Cz")] = lagged
    eeg = PINK_UV * _pink(rngs[0], (n_ch, n), EEG_FS)
    eeg += THETA_GAIN[:, None] * (env["theta_shared"] * theta_src
                                  + env["theta_ind"] * _band_noise(rngs[2], (n_ch, n), EEG_FS, 4.0, 8.0))
    eeg += ALPHA_GAIN[:, None] * env["alpha"] * _band_noise(rngs[3], (n,), EEG_FS, 8.0, 12.0)
    eeg += env["beta"] * _band_noise(rngs[4], (n_ch, n), EEG_FS, 13.0, 30.0)
    eeg += DELTA_GAIN[:, None] * env["delta"] * _band_noise(rngs[5], (n,), EEG_FS, 1.0, 4.0)
    if eff is not None and eff.jaw_bursts:
        bursts = (rngs[6].random(len(states)) < 0.5).astype(float)
        burst_env = _per_sample(bursts, np.arange(len(states)), n, EEG_FS, step_ms, 0.05)
        eeg += (JAW_GAIN * env["beta"] * burst_env
                * _band_noise(rngs[7], (n_ch, n), EEG_FS, 13.0, 60.0))
    eeg_buf = StreamBuffer.from_array(StreamId.EEG, EEG_CHANNELS, EEG_FS, eeg.T, t0_ms)

    # respiration drives the respiratory sinus arrhythmia term of the IBIs
    n_r = int(round(duration_ms * RESP_FS / 1000))
    paced = eff is not None and eff.paced
    resp_hz = (np.full(n_r, PACED_HZ) if paced
               else _per_sample(_table("resp_hz"), states, n_r, RESP_FS, step_ms, 2.0))
    resp_amp = _per_sample(_table("resp_amp"), states, n_r, RESP_FS, step_ms, 2.0)
    phase = 2 * np.pi * np.cumsum(resp_hz) / RESP_FS + rngs[8].uniform(0, 2 * np.pi)
    breath = np.sin(phase)
    resp = resp_amp * breath + 0.03 * rngs[8].standard_normal(n_r)
    resp_buf = StreamBuffer.from_array(StreamId.RESP, ("resp",), RESP_FS, resp, t0_ms)

    ibi_rng = rngs[9]
    lf_amp = LF_AMP_MS * (eff.lf_scale if eff is not None else 1.0)
    rsa_amp = PACED_RSA_AMP_MS if paced else RSA_AMP_MS
    lf_phase = ibi_rng.uniform(0, 2 * np.pi)
    mean_ibi = _table("mean_ibi_ms")
    lf_gain = _table("lf_gain")
    beat_t, beat_ibi = [], []
    t = float(t0_ms) + ibi_rng.uniform(0, 800)
    end = t0_ms + duration_ms
    while True:
        k = min(int((t - t0_ms) // step_ms), len(states) - 1)
        j = min(int((t - t0_ms) * RESP_FS / 1000), n_r - 1)
        ibi = (mean_ibi[states[k]]
               + lf_amp * lf_gain[states[k]]
               * math.sin(2 * math.pi * 0.1 * (t - t0_ms) / 1000 + lf_phase)
               + rsa_amp * breath[j]
               + IBI_NOISE_MS * ibi_rng.standard_normal())
        t += ibi
        if t >= end:
            break
        beat_t.append(t)
        beat_ibi.append(ibi)
    ibis = IbiSeries(np.round(np.array(beat_t)).astype(np.int64).astype(float),
                     np.array(beat_ibi))

    # IMU: gravity vector tilted by head pitch plus movement jitter
    n_i = int(round(duration_ms * IMU_FS / 1000))
    posture = eff is not None and eff.posture
    pitch = (np.zeros(n_i) if posture
             else _per_sample(_table("pitch_deg"), states, n_i, IMU_FS, step_ms, 2.0))
    jitter = (np.full(n_i, 0.002) if posture
              else _per_sample(_table("jitter_g"), states, n_i, IMU_FS, step_ms))
    p = np.radians(pitch)
    noise = rngs[10].standard_normal((6, n_i))
    imu = np.stack([np.sin(p) + jitter * noise[0], jitter * noise[1],
                    np.cos(p) + jitter * noise[2]] + [0.5 * noise[k] for k in (3, 4, 5)])
    imu_buf = StreamBuffer.from_array(StreamId.IMU, IMU_CHANNELS, IMU_FS, imu.T, t0_ms)

    n_g = max(1, int(round(duration_ms * GSR_FS / 1000)))
    gsr_scale = eff.gsr_scale if eff is not None else 1.0
    gsr = (gsr_scale * _per_sample(_table("gsr_us"), states, n_g, GSR_FS, step_ms, 5.0)
           + 0.05 * rngs[11].standard_normal(n_g))
    gsr_buf = StreamBuffer.from_array(StreamId.GSR, ("gsr",), GSR_FS, gsr, t0_ms)

    streams = SensorStreams(eeg_buf, ibis, resp_buf, imu_buf, gsr_buf)
    return SimRecording(streams, states, Strategy(strategy) if strategy else None,
                        t0_ms, step_ms)


# ---------------------------------------------------------------- devices

class RewardRule(str, enum.Enum):
    CALM_EEG = "reward_calm_eeg"
    HRV_COHERENCE = "reward_hrv_coherence"
    BREATH_RESONANCE = "reward_breath_resonance"
    NEGATIVE_CUE_ONLY = "negative_cue_only"
    NONE = "none"


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    reward_rule: RewardRule
    # shortest episode the rule can score (LF/HF needs a minute of beats)
    min_episode_ms: int = 0

    @property
    def positive_valence(self) -> bool:
        return self.reward_rule in (RewardRule.CALM_EEG, RewardRule.HRV_COHERENCE,
                                    RewardRule.BREATH_RESONANCE)


DEVICES = {
    "muse-like": DeviceSpec("muse-like", RewardRule.CALM_EEG),
    "heartmath-like": DeviceSpec("heartmath-like", RewardRule.HRV_COHERENCE, 64_000),
    "iom2-like": DeviceSpec("iom2-like", RewardRule.BREATH_RESONANCE, 20_000),
    "proposed": DeviceSpec("proposed", RewardRule.NEGATIVE_CUE_ONLY),
    "none": DeviceSpec("none", RewardRule.NONE),
}

# calm score ln((alpha + theta) / beta) that maps to zero valence; set midway
# between the settled and wandering means of the generator
CALM_REFERENCE = 0.6
COHERENCE_REFERENCE = 2.0
RESONANCE_BPM = 6.0
CALM_CHANNELS = ("Fp1", "Fp2", "TP9", "TP10")


@dataclass(frozen=True)
class Feedback:
    valence: float
    window_valence: tuple[float, ...] = ()
    cues: tuple[CueEvent, ...] = ()


def calm_scores(eeg: StreamBuffer) -> tuple[np.ndarray, np.ndarray]:
    """Per-window calm score and window end times from the fast windows."""
    windows = segment_windows(eeg, 500, 250)
    pick = [eeg.channels.index(c) for c in CALM_CHANNELS]
    x = np.stack([w.data[pick] for w in windows])
    fs = eeg.sample_rate
    a, t, b = (band_power(x, band, fs) for band in (ALPHA, THETA, BETA))
    return np.log((a + t) / b).mean(axis=1), np.array([w.end_ms for w in windows])


def device_feedback(dev: DeviceSpec, streams: SensorStreams,
                    model: WanderingModel | None = None,
                    cue_config: CueConfig = CueConfig()) -> Feedback:
    """Score observable streams the way ``dev`` would."""
    rule = dev.reward_rule
    if rule is RewardRule.CALM_EEG:
        calm, _ = calm_scores(streams.eeg)
        v = np.tanh(calm - CALM_REFERENCE)
        return Feedback(float(v.mean()), tuple(float(x) for x in v))
    if rule is RewardRule.HRV_COHERENCE:
        ratio = lf_hf_ratio(streams.ibis)
        v = math.tanh(math.log(ratio) - math.log(COHERENCE_REFERENCE))
        return Feedback(v, (v,))
    if rule is RewardRule.BREATH_RESONANCE:
        rate = respiration_features(streams.resp.view()[:, 0], streams.resp.sample_rate).rate_bpm
        v = 2 * math.exp(-((rate - RESONANCE_BPM) / 2.0) ** 2) - 1
        return Feedback(v, (v,))
    if rule is RewardRule.NEGATIVE_CUE_ONLY:
        if model is None:
            raise NoModel("negative-cue device needs a trained wandering model")
        fvs = [f for f in extract_fast_features_batch(streams.eeg) if f.quality_flag]
        if not fvs:
            return Feedback(0.0)
        p = model.predict_proba(np.array([f.as_array() for f in fvs]))
        cues = CueEngine(cue_config).run([f.t_ms for f in fvs], p)
        return Feedback(0.0, (), tuple(cues))
    return Feedback(0.0)


def agent_reward(dev: DeviceSpec, fb: Feedback) -> float:
    if dev.reward_rule is RewardRule.NEGATIVE_CUE_ONLY:
        return -float(len(fb.cues))
    return fb.valence


# ---------------------------------------------------------------- agent

@dataclass(frozen=True)
class StrategyPolicy:
    weights: tuple[float, ...] = (0.0,) * len(STRATEGIES)
    temperature: float = 0.2
    learning_rate: float = 0.1
    seed: int = 0
    baseline: float = 0.0
    n_updates: int = 0

    def __post_init__(self):
        if len(self.weights) != len(STRATEGIES):
            raise ValueError("one weight per strategy")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    def probabilities(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float) / self.temperature
        e = np.exp(w - w.max())
        return e / e.sum()

    def mode(self) -> Strategy:
        return STRATEGIES[int(np.argmax(self.probabilities()))]

    def sample(self, rng: np.random.Generator) -> Strategy:
        return STRATEGIES[int(rng.choice(len(STRATEGIES), p=self.probabilities()))]

    @classmethod
    def pure(cls, strategy: Strategy, **kw) -> "StrategyPolicy":
        w = [-math.inf] * len(STRATEGIES)
        w[STRATEGIES.index(Strategy(strategy))] = 0.0
        return cls(tuple(w), **kw)


def agent_step(policy: StrategyPolicy, episode_reward: float,
               chosen: Strategy) -> StrategyPolicy:
    """Softmax-bandit update against the running mean reward (current one included)."""
    if not math.isfinite(episode_reward):
        raise ValueError("reward must be finite")
    n = policy.n_updates + 1
    baseline = policy.baseline + (episode_reward - policy.baseline) / n
    w = list(policy.weights)
    w[STRATEGIES.index(Strategy(chosen))] += policy.learning_rate * (episode_reward - baseline)
    return replace(policy, weights=tuple(w), baseline=baseline, n_updates=n)


@dataclass(frozen=True)
class AgentConfig:
    episodes: int = 300
    episode_ms: int = 20_000
    learning_rate: float = 0.1
    temperature: float = 0.2
    v_target_every: int = 50
    v_target_episodes: int = 100


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    strategy: Strategy
    r_proxy: float
    cues: int
    reward: float
    v_target_eval: float = math.nan


@dataclass(frozen=True)
class Trajectory:
    device: str
    records: tuple[EpisodeRecord, ...]
    final_policy: StrategyPolicy

    def csv_rows(self):
        header = ("episode", "strategy", "r_proxy", "cues", "v_target_eval")
        rows = [(r.episode, r.strategy.value, r.r_proxy, r.cues, r.v_target_eval)
                for r in self.records]
        return header, rows

    def cues_by_strategy(self) -> dict[str, float]:
        out = {}
        for s in STRATEGIES:
            c = [r.cues for r in self.records if r.strategy is s]
            out[s.value] = float(np.mean(c)) if c else math.nan
        return out


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _subseed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1)[0])


def run_episode(dev: DeviceSpec, strategy: Strategy, duration_ms: int, seed: int,
                model: WanderingModel | None = None,
                cue_config: CueConfig = CueConfig()) -> tuple[Feedback, SimRecording]:
    h, r = hazard_rates(strategy, device_present=True)
    home = STRATEGY_EFFECTS[strategy].home
    states = simulate_states(home, h, r, -(-duration_ms // STEP_MS), _rng(seed, 0))
    rec = generate_signals(states, strategy, duration_ms, _subseed(seed, 1))
    return device_feedback(dev, rec.streams, model, cue_config), rec


def run_closed_loop(dev: DeviceSpec, agent: AgentConfig = AgentConfig(),
                    episodes: int | None = None, seed: int = 0,
                    model: WanderingModel | None = None,
                    cue_config: CueConfig = CueConfig()) -> Trajectory:
    """Sense, classify, feed back, learn: one bandit update per episode."""
    n_ep = agent.episodes if episodes is None else episodes
    if n_ep < 1:
        raise ValueError("need at least one episode")
    if dev.reward_rule is RewardRule.NEGATIVE_CUE_ONLY and model is None:
        model = calibrate_model(seed).model
    duration = max(agent.episode_ms, dev.min_episode_ms)
    policy = StrategyPolicy(temperature=agent.temperature,
                            learning_rate=agent.learning_rate, seed=seed)
    choose = _rng(seed, 1)
    records = []
    for i in range(n_ep):
        strategy = policy.sample(choose)
        fb, _ = run_episode(dev, strategy, duration, _subseed(seed, 2, i), model, cue_config)
        reward = agent_reward(dev, fb)
        policy = agent_step(policy, reward, strategy)
        v = math.nan
        if agent.v_target_every and ((i + 1) % agent.v_target_every == 0 or i == n_ep - 1):
            v = measure_v_target(policy, agent.v_target_episodes, _subseed(seed, 3, i))
        records.append(EpisodeRecord(i, strategy, fb.valence, len(fb.cues), reward, v))
    return Trajectory(dev.name, tuple(records), policy)


def measure_v_target(policy: StrategyPolicy, eval_episodes: int = 200, seed: int = 0,
                     episode_ms: int = 600_000) -> float:
    """Negative mean wandering fraction over device-absent practice episodes."""
    if eval_episodes < 1:
        raise ValueError("need at least one evaluation episode")
    rng = _rng(seed, 4)
    n_steps = episode_ms // STEP_MS
    fractions = []
    for _ in range(eval_episodes):
        s = policy.sample(rng)
        h, r = hazard_rates(s, device_present=False)
        states = simulate_states(STRATEGY_EFFECTS[s].home, h, r, n_steps, rng)
        fractions.append(np.mean(states == W_IDX))
    return -float(np.mean(fractions))


def mean_proxy(dev: DeviceSpec, strategy: Strategy, episodes: int, seed: int,
               duration_ms: int = 20_000) -> float:
    """Average device valence under a fixed strategy."""
    duration = max(duration_ms, dev.min_episode_ms)
    return float(np.mean([run_episode(dev, strategy, duration, _subseed(seed, 5, k))[0].valence
                          for k in range(episodes)]))


# ---------------------------------------------------------------- Phase A

@dataclass(frozen=True)
class SimSession:
    session_id: str
    duration_ms: int
    probes: tuple[ProbeLabel, ...]
    features: tuple[FastFeatureVector, ...]
    transitions: tuple[tuple[int, str], ...]


def _duration_bucket(ms: int) -> str:
    if ms < 10_000:
        return "<10s"
    return "10-60s" if ms <= 60_000 else ">60s"


def simulate_probe_session(session_id: str, seed: int, duration_ms: int = 1_200_000,
                           strategy: Strategy | None = None, device_present: bool = False,
                           context_ms: int = 3000, unclear_rate: float = 0.05) -> SimSession:
    """A sensing session with probes; EEG is synthesized only before each probe."""
    h, r = hazard_rates(strategy, device_present)
    home = STRATEGY_EFFECTS[strategy].home if strategy else MentalState.SETTLED
    n_steps = duration_ms // STEP_MS
    states = simulate_states(home, h, r, n_steps, _rng(seed, 0))
    rng = _rng(seed, 1)
    probes, features = [], []
    for k, t in enumerate(schedule_probes(duration_ms, _subseed(seed, 2))):
        i = min(t // STEP_MS, n_steps - 1)
        if rng.random() < unclear_rate:
            probes.append(ProbeLabel(t, ProbeResponse.UNCLEAR))
        elif states[i] == W_IDX:
            j = i
            while j > 0 and states[j - 1] == W_IDX:
                j -= 1
            probes.append(ProbeLabel(t, ProbeResponse.WANDERING,
                                     _duration_bucket(t - j * STEP_MS)))
        else:
            probes.append(ProbeLabel(t, ProbeResponse.SETTLED))
        t0 = t - context_ms
        seg = states[t0 // STEP_MS: t0 // STEP_MS + context_ms // STEP_MS]
        rec = generate_signals(seg, strategy, context_ms, _subseed(seed, 3, k), t0_ms=t0)
        features.extend(extract_fast_features_batch(rec.streams.eeg))
    return SimSession(session_id, duration_ms, tuple(probes), tuple(features),
                      tuple(state_transitions(states)))


def simulate_phase_a(seed: int, n_sessions: int = 10,
                     duration_ms: int = 1_200_000) -> list[SimSession]:
    return [simulate_probe_session(f"A{k + 1:02d}", _subseed(seed, 6, k), duration_ms)
            for k in range(n_sessions)]


@dataclass(frozen=True)
class Calibration:
    model: WanderingModel
    cv_accuracy: float
    sessions: tuple[SimSession, ...]


def phase_a_training_set(sessions: Sequence[SimSession]):
    return build_training_set_multi({s.session_id: (s.probes, s.features) for s in sessions})


def calibrate_model(seed: int, n_sessions: int = 10, n_trees: int = 50) -> Calibration:
    """Train the wandering model on simulated Phase-A probe data."""
    sessions = simulate_phase_a(seed, n_sessions)
    ts = phase_a_training_set(sessions)
    model = train(ts, seed, n_trees=n_trees, user_id=f"sim-{seed}")
    return Calibration(model, model.cv_accuracy, tuple(sessions))


# ---------------------------------------------------------------- study

@dataclass(frozen=True)
class StudySessionResult:
    session_id: str
    phase: Phase
    cueing_enabled: bool
    strategy: str
    median_interval_ms: float
    wandering_fraction: float
    n_intervals: int


@dataclass(frozen=True)
class StudyOutcome:
    verdict: TransferVerdict
    sessions: tuple[StudySessionResult, ...]

    def wandering_fraction(self, phase: Phase, cueing: bool | None = None) -> float:
        vals = [s.wandering_fraction for s in self.sessions if s.phase is phase
                and (cueing is None or s.cueing_enabled == cueing)]
        return float(np.mean(vals)) if vals else math.nan


def simulate_study(policy: StrategyPolicy, seed: int,
                   config: StudyConfig | None = None) -> StudyOutcome:
    """Run the A/B/C protocol on ground-truth state chains.

    Phase A is untrained practice. Phase B cue-on sessions use the
    device-worn hazards of the sampled strategy; cue-free Phase B and all
    Phase C sessions use the unassisted hazards.
    """
    config = config or StudyConfig(seed=seed)
    plan = plan_study(config)
    rng = _rng(seed, 7)
    intervals = {Phase.A: [], Phase.C: []}
    results = []
    for k, sess in enumerate(plan.sessions):
        n_steps = sess.duration_ms // STEP_MS
        if sess.phase is Phase.A:
            strategy = None
        else:
            strategy = policy.sample(rng)
        h, r = hazard_rates(strategy, device_present=sess.cueing_enabled)
        home = STRATEGY_EFFECTS[strategy].home if strategy else MentalState.SETTLED
        states = simulate_states(home, h, r, n_steps, _rng(seed, 8, k))
        ivs = intervals_from_truth(sess.session_id, state_transitions(states))
        if sess.phase in intervals:
            intervals[sess.phase].extend(ivs)
        med = float(np.median([iv.duration_ms for iv in ivs])) if ivs else math.nan
        results.append(StudySessionResult(
            sess.session_id, sess.phase, sess.cueing_enabled,
            strategy.value if strategy else "untrained", med,
            float(np.mean(states == W_IDX)), len(ivs)))
    return StudyOutcome(transfer_test(intervals[Phase.A], intervals[Phase.C]), tuple(results))


# ---------------------------------------------------------------- demos

@dataclass(frozen=True)
class DemoReport:
    seed: int
    flags: dict
    lines: tuple[str, ...]
    tables: dict  # file name -> (header, rows)

    @property
    def all_reproduced(self) -> bool:
        return all(self.flags.values())

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def demo_failure_modes(seed: int, agent: AgentConfig = AgentConfig(),
                       eval_episodes: int = 10) -> DemoReport:
    """Proxy mismatch, strategy shortcutting and transfer failure, end to end."""
    muse = DEVICES["muse-like"]
    lines = [f"failure-mode demonstrations, seed {seed}"]
    tables = {}

    # 1: drowsiness scores as calm
    rows = []
    valence = {}
    for k, st in enumerate(MentalState):
        rec = generate_signals(st, None, 20_000, _subseed(seed, 10, k))
        fb = device_feedback(muse, rec.streams)
        valence[st] = fb.valence
        _, ends = calm_scores(rec.streams.eeg)
        rows += [(st.value, int(t), v) for t, v in zip(ends, fb.window_valence)]
    tables["demo1_proxy_mismatch.csv"] = (("state", "t_ms", "valence"), rows)
    flag1 = valence[MentalState.DROWSY] > 0
    lines.append(f"demo 1 proxy mismatch: {'REPRODUCED' if flag1 else 'NOT REPRODUCED'}")
    for st in MentalState:
        lines.append(f"  valence[{st.value}] = {valence[st]:+.4f}")

    # 2: the bandit finds the proxy's argmax
    traj = run_closed_loop(muse, agent, seed=seed)
    header, trows = traj.csv_rows()
    tables["demo2_trajectory.csv"] = (header, trows)
    probs = traj.final_policy.probabilities()
    tables["demo2_policy.csv"] = (("strategy", "probability"),
                                  [(s.value, float(p)) for s, p in zip(STRATEGIES, probs)])
    mode = traj.final_policy.mode()
    r_mode = mean_proxy(muse, mode, eval_episodes, _subseed(seed, 11))
    r_gen = mean_proxy(muse, Strategy.GENUINE, eval_episodes, _subseed(seed, 11))
    v_mode = measure_v_target(StrategyPolicy.pure(mode), 200, _subseed(seed, 12))
    v_gen = measure_v_target(StrategyPolicy.pure(Strategy.GENUINE), 200, _subseed(seed, 12))
    flag2 = mode is not Strategy.GENUINE and r_mode > r_gen and v_mode < v_gen
    lines.append(f"demo 2 strategy shortcutting: {'REPRODUCED' if flag2 else 'NOT REPRODUCED'}")
    lines.append(f"  terminal mode = {mode.value} (p = {probs.max():.4f})")
    lines.append(f"  R_proxy(argmax) = {r_mode:+.4f}  R_proxy(genuine) = {r_gen:+.4f}")
    lines.append(f"  V_target(argmax) = {v_mode:+.4f}  V_target(genuine) = {v_gen:+.4f}")

    # 3: device-dependent skill does not transfer
    dep = simulate_study(traj.final_policy, _subseed(seed, 13))
    ctrl = simulate_study(StrategyPolicy.pure(Strategy.GENUINE), _subseed(seed, 13))
    flag3 = not dep.verdict.passed
    lines.append(f"demo 3 transfer failure: {'REPRODUCED' if flag3 else 'NOT REPRODUCED'}")
    for name, out in (("device-trained", dep), ("genuine control", ctrl)):
        v = out.verdict
        lines.append(f"  {name}: U = {v.u_statistic:g}, p = {v.p_value:.6f}, {v.label}")
        lines.append(f"    wandering fraction A = {out.wandering_fraction(Phase.A):.4f}"
                     f"  B(cued) = {out.wandering_fraction(Phase.B, True):.4f}"
                     f"  C = {out.wandering_fraction(Phase.C):.4f}")
    srows = [(name, s.session_id, s.phase.value, int(s.cueing_enabled), s.strategy,
              s.median_interval_ms, s.wandering_fraction, s.n_intervals)
             for name, out in (("device-trained", dep), ("genuine-control", ctrl))
             for s in out.sessions]
    tables["demo3_sessions.csv"] = (("agent", "session_id", "phase", "cueing", "strategy",
                                     "median_interval_ms", "wandering_fraction",
                                     "n_intervals"), srows)
    flags = {"proxy_mismatch": flag1, "strategy_shortcutting": flag2,
             "transfer_failure": flag3}
    return DemoReport(seed, flags, tuple(lines), tables)

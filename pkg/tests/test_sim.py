import dataclasses
import inspect
import math

import numpy as np
import pytest

from cuelab.errors import NoModel
from cuelab.fast import extract_fast_features_batch, theta_plv
from cuelab.signal import BETA, band_power, segment_windows
from cuelab.sim import (DEVICES, STRATEGIES, STRATEGY_EFFECTS, AgentConfig, MentalState,
                        SensorStreams, Strategy, StrategyPolicy, agent_step, device_feedback,
                        generate_signals, hazard_rates, measure_v_target, run_closed_loop,
                        simulate_states, state_transitions)
from cuelab.somatic import lf_hf_ratio


def plvs(rec):
    return np.array([theta_plv(w) for w in segment_windows(rec.streams.eeg, 500, 250)])


def test_minimum_duration():
    with pytest.raises(ValueError):
        generate_signals(MentalState.SETTLED, None, 999, 0)


def test_theta_plv_separates_settled_from_wandering():
    settled = plvs(generate_signals(MentalState.SETTLED, Strategy.GENUINE, 30_000, 1))
    wandering = plvs(generate_signals(MentalState.WANDERING, None, 30_000, 1))
    gap = settled.mean() - wandering.mean()
    assert gap >= max(settled.std(), wandering.std())


@pytest.mark.parametrize("state", list(MentalState))
def test_jaw_bursts_raise_beta(state):
    def beta(strategy):
        eeg = generate_signals(state, strategy, 20_000, 5).streams.eeg.view()
        return band_power(eeg.T, BETA, 256.0).mean()
    assert beta(Strategy.JAW) >= 5 * beta(None)


def test_jaw_modifies_only_eeg():
    a = generate_signals(MentalState.SETTLED, Strategy.JAW, 5000, 2).streams
    b = generate_signals(MentalState.SETTLED, None, 5000, 2).streams
    assert np.array_equal(a.ibis.ibi_ms, b.ibis.ibi_ms)
    assert np.array_equal(a.resp.view(), b.resp.view())
    assert np.array_equal(a.imu.view(), b.imu.view())
    assert not np.array_equal(a.eeg.view(), b.eeg.view())


def test_paced_breathing_lf_hf():
    for seed in range(3):
        rec = generate_signals(MentalState.SETTLED, Strategy.PACED, 90_000, seed)
        assert lf_hf_ratio(rec.streams.ibis) >= 5


def test_strategy_effect_invariants():
    improving = [s for s, e in STRATEGY_EFFECTS.items() if e.v_target_effect < 0]
    assert improving == [Strategy.GENUINE]
    sup = STRATEGY_EFFECTS[Strategy.SUPPRESSION]
    assert sup.v_target_effect == sup.session_effect == 0
    assert sup.lf_scale < 1 and sup.gsr_scale < 1
    assert hazard_rates(Strategy.SUPPRESSION, True) == hazard_rates(None, False)


def test_state_chain_transitions():
    rng = np.random.default_rng(0)
    s = simulate_states(MentalState.SETTLED, 0.03, 0.05, 4000, rng)
    tr = state_transitions(s)
    assert tr[0] == (0, "settled") and tr[-1] == (4000 * 250, "end")
    assert all(a[1] != b[1] for a, b in zip(tr[:-2], tr[1:-1]))
    # stationary wandering share h / (h + r)
    long = simulate_states(MentalState.SETTLED, 0.03, 0.05, 400_000, rng)
    assert np.mean(long == 1) == pytest.approx(0.03 / 0.08, abs=0.03)


def test_generation_is_deterministic():
    a = generate_signals(MentalState.DROWSY, Strategy.DROWSINESS, 3000, 9).streams
    b = generate_signals(MentalState.DROWSY, Strategy.DROWSINESS, 3000, 9).streams
    assert np.array_equal(a.eeg.view(), b.eeg.view())
    assert np.array_equal(a.ibis.ibi_ms, b.ibis.ibi_ms)


# ---- bandit

def bandit_run(rewards, seed, episodes=500, lr=0.1, temp=0.2):
    policy = StrategyPolicy(temperature=temp, learning_rate=lr, seed=seed)
    rng = np.random.default_rng(seed)
    for _ in range(episodes):
        s = policy.sample(rng)
        policy = agent_step(policy, rewards[STRATEGIES.index(s)], s)
    return policy


def test_bandit_finds_rewarded_arm():
    rewards = [0.0] * len(STRATEGIES)
    rewards[2] = 1.0
    p = np.mean([bandit_run(rewards, seed).probabilities()[2] for seed in range(20)])
    assert p > 0.9


def test_bandit_equal_rewards_stay_uniform():
    for seed in range(20):
        probs = bandit_run([0.3] * len(STRATEGIES), seed).probabilities()
        assert np.all(np.abs(probs - 1 / len(STRATEGIES)) <= 0.05)


def test_zero_learning_rate():
    pol = StrategyPolicy(learning_rate=0.0)
    after = agent_step(pol, 5.0, Strategy.JAW)
    assert after.weights == pol.weights


def test_agent_step_rejects_nonfinite():
    with pytest.raises(ValueError):
        agent_step(StrategyPolicy(), math.nan, Strategy.JAW)


def test_policy_is_distribution():
    p = StrategyPolicy((1.0, -2.0, 0.5, 3.0, 0.0, 0.1)).probabilities()
    assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)
    pure = StrategyPolicy.pure(Strategy.DROWSINESS).probabilities()
    assert pure[STRATEGIES.index(Strategy.DROWSINESS)] == 1.0


# ---- V_target

def v_runs(policy, seeds=range(5), episodes=50):
    return np.array([measure_v_target(policy, episodes, s) for s in seeds])


def test_v_target_orders_pure_policies():
    genuine = v_runs(StrategyPolicy.pure(Strategy.GENUINE))
    drowsy = v_runs(StrategyPolicy.pure(Strategy.DROWSINESS))
    uniform = v_runs(StrategyPolicy())
    sd = max(genuine.std(ddof=1), drowsy.std(ddof=1))
    assert genuine.mean() - drowsy.mean() >= 3 * sd
    assert drowsy.mean() < uniform.mean() < genuine.mean()


def test_v_target_deterministic():
    pol = StrategyPolicy()
    assert measure_v_target(pol, 20, 3) == measure_v_target(pol, 20, 3)
    with pytest.raises(ValueError):
        measure_v_target(pol, 0, 3)


# ---- devices

def test_feedback_sees_only_observable_streams():
    params = list(inspect.signature(device_feedback).parameters)
    assert params == ["dev", "streams", "model", "cue_config"]
    fields = {f.name for f in dataclasses.fields(SensorStreams)}
    assert fields == {"eeg", "ibis", "resp", "imu", "gsr"}


def test_drowsy_scores_as_calm():
    rec = generate_signals(MentalState.DROWSY, None, 20_000, 0)
    assert device_feedback(DEVICES["muse-like"], rec.streams).valence > 0
    rec = generate_signals(MentalState.WANDERING, None, 20_000, 0)
    assert device_feedback(DEVICES["muse-like"], rec.streams).valence < 0


class ConstantModel:
    def __init__(self, p):
        self.p = p

    def predict_proba(self, X):
        return np.full(len(X), self.p)


def test_negative_only_device_contract():
    dev = DEVICES["proposed"]
    assert not dev.positive_valence
    streams = generate_signals(MentalState.SETTLED, None, 20_000, 3).streams
    fb = device_feedback(dev, streams, ConstantModel(0.1))
    assert fb.valence == 0 and fb.cues == ()
    fb = device_feedback(dev, streams, ConstantModel(0.95))
    assert fb.valence == 0 and len(fb.cues) >= 1
    with pytest.raises(NoModel):
        device_feedback(dev, streams)


def test_negative_only_device_with_calibrated_model(model):
    dev = DEVICES["proposed"]

    def cued(state, seed):
        fb = device_feedback(dev, generate_signals(state, None, 20_000, seed).streams, model)
        assert fb.valence == 0 and fb.window_valence == ()
        return len(fb.cues) > 0

    seeds = range(20)
    assert np.mean([cued(MentalState.WANDERING, s) for s in seeds]) >= 0.9
    assert np.mean([cued(MentalState.SETTLED, s) for s in seeds]) <= 0.4


def test_batch_windows_cover_recording():
    rec = generate_signals(MentalState.WANDERING, None, 5000, 4)
    fvs = extract_fast_features_batch(rec.streams.eeg)
    assert len(fvs) == 19


# ---- closed loop

SHORT = AgentConfig(episodes=40, episode_ms=5000, v_target_every=20, v_target_episodes=10)


def test_closed_loop_deterministic():
    a = run_closed_loop(DEVICES["muse-like"], SHORT, seed=11)
    b = run_closed_loop(DEVICES["muse-like"], SHORT, seed=11)
    assert a == b
    assert len(a.records) == 40
    assert not math.isnan(a.records[19].v_target_eval)


def test_null_device_stays_uniform():
    traj = run_closed_loop(DEVICES["none"], SHORT, seed=0)
    assert traj.final_policy.weights == (0.0,) * len(STRATEGIES)
    assert all(r.reward == 0 for r in traj.records)


def test_closed_loop_needs_episodes():
    with pytest.raises(ValueError):
        run_closed_loop(DEVICES["none"], SHORT, episodes=0)


def test_calm_eeg_agent_shortcuts():
    traj = run_closed_loop(DEVICES["muse-like"], AgentConfig(v_target_every=0), seed=3)
    assert traj.final_policy.mode() in (Strategy.DROWSINESS, Strategy.JAW)


def test_calibration_is_learnable(calibration):
    assert calibration.cv_accuracy >= 0.8

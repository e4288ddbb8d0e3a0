import numpy as np
import pytest

from daggerlab import gating, nncore
from daggerlab.gating import ContextBuffer, GateState, gate_step
from daggerlab.policy import Dataset, TransitionSample


def interpret_gate_sequence(threshold, met_window, measures):
    """Brute-force line-by-line interpreter of the control-handover loop.

    Written first, directly from the published branch structure, with the
    two documented disambiguations: the dwell clause applies to an ongoing
    expert intervention (a handed-back novice is not re-triggered by the
    stale counter), and the switch counter ticks on novice->expert
    handovers (the sub-threshold check on the previous measure alone would
    double-count interior dwell steps). The session starts under novice
    control with the previous measure treated as sub-threshold.
    """
    controller = "novice"
    w = 0
    nswitch = 0
    prev_m = 0.0
    out = []
    for m in measures:
        if m > threshold or (controller == "expert" and w < met_window):
            if m <= threshold:
                w = w + 1
            else:
                w = 0
            if controller == "novice" and prev_m <= threshold:
                nswitch = nswitch + 1
            controller = "expert"
        else:
            w = 0
            controller = "novice"
        out.append(controller)
        prev_m = m
    return out, nswitch


def run_gate(threshold, met_window, measures):
    state = GateState(threshold=threshold, met_window=met_window)
    controllers = []
    for m in measures:
        who, state = gate_step(state, m)
        controllers.append(who)
    return controllers, state.switch_count


# ---------------------------------------------------------------------------
# context stacking


def test_context_h0_is_raw_observation():
    buf = ContextBuffer(0)
    obs = np.array([1.0, 2.0])
    assert np.array_equal(buf.vector(obs), obs)


def test_context_padding_at_episode_start():
    buf = ContextBuffer(2)
    obs0 = np.array([1.0, -1.0])
    assert np.array_equal(buf.vector(obs0), np.concatenate([obs0, obs0, obs0]))
    buf.push(obs0)
    obs1 = np.array([2.0, -2.0])
    assert np.array_equal(buf.vector(obs1), np.concatenate([obs0, obs0, obs1]))


def test_context_exact_concatenation_when_full():
    buf = ContextBuffer(2)
    frames = [np.array([float(i), float(-i)]) for i in range(5)]
    for f in frames[:4]:
        buf.push(f)
    v = buf.vector(frames[4])
    assert np.array_equal(v, np.concatenate([frames[2], frames[3], frames[4]]))


def test_context_reset_clears():
    buf = ContextBuffer(2)
    buf.push(np.array([5.0]))
    buf.reset()
    obs = np.array([1.0])
    assert np.array_equal(buf.vector(obs), np.array([1.0, 1.0, 1.0]))


# ---------------------------------------------------------------------------
# distillation measure


def test_measure_zero_when_predictor_copies_target():
    pair = gating.rnd_init(4, context_length=0, hidden=8, n_layers=1, output_dim=3, seed=0)
    pair.predictor = pair.target.copy()
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert gating.rnd_measure(pair, rng.normal(size=4)) == 0.0


def test_measure_squared_norm_arithmetic():
    # one affine map each; craft outputs (1,2) vs (1,0) on a fixed input
    pair = gating.rnd_init(2, 0, hidden=0, n_layers=0, output_dim=2, seed=0)
    pair.target.weights[0][:] = 0.0
    pair.target.biases[0][:] = np.array([1.0, 2.0])
    pair.predictor.weights[0][:] = 0.0
    pair.predictor.biases[0][:] = np.array([1.0, 0.0])
    assert gating.rnd_measure(pair, np.zeros(2)) == 4.0


def test_measure_dim_mismatch():
    pair = gating.rnd_init(4, 1, output_dim=2, seed=0)
    with pytest.raises(ValueError):
        gating.rnd_measure(pair, np.zeros(4))  # needs 8 with H=1


def test_train_single_repeated_state_converges():
    pair = gating.rnd_init(3, 0, hidden=8, n_layers=1, output_dim=4, seed=1)
    X = np.tile(np.array([0.4, -0.2, 1.0]), (32, 1))
    trained = gating.rnd_train_arrays(pair, X, epochs=200, learning_rate=1e-2, seed=0)
    assert gating.rnd_measure(trained, X[0]) < 1e-4


def test_train_zero_target_drives_measure_down_everywhere():
    pair = gating.rnd_init(3, 0, hidden=8, n_layers=1, output_dim=4, seed=2)
    for w in pair.target.weights:
        w[:] = 0.0
    rng = np.random.default_rng(3)
    X = rng.normal(size=(200, 3))
    trained = gating.rnd_train_arrays(pair, X, epochs=300, learning_rate=1e-2, seed=0)
    probe = rng.normal(size=(50, 3))
    assert gating.rnd_measures_batch(trained, probe).mean() < 1e-3


def test_train_decreases_mean_measure_across_epochs():
    pair = gating.rnd_init(4, 0, hidden=16, n_layers=1, output_dim=8, seed=4)
    rng = np.random.default_rng(5)
    X = rng.normal(size=(300, 4))
    means = []
    current = pair
    for _ in range(5):
        current = gating.rnd_train_arrays(current, X, epochs=1, learning_rate=1e-3, seed=0)
        means.append(gating.rnd_measures_batch(current, X).mean())
    assert all(b < a for a, b in zip(means, means[1:]))


def test_train_leaves_target_untouched():
    pair = gating.rnd_init(3, 0, output_dim=4, seed=6)
    before = [w.copy() for w in pair.target.weights]
    trained = gating.rnd_train_arrays(pair, np.random.default_rng(0).normal(size=(50, 3)),
                                      epochs=5, seed=0)
    for a, b in zip(trained.target.weights, before):
        assert np.array_equal(a, b)


def test_rnd_train_requires_contexts():
    pair = gating.rnd_init(2, 0, output_dim=2, seed=0)
    ds = Dataset()
    with pytest.raises(ValueError):
        gating.rnd_train(pair, ds)
    ds.append_block([TransitionSample(np.zeros(2), 0, "expert", 0, 0, 0, context=None)])
    with pytest.raises(ValueError):
        gating.rnd_train(pair, ds)


# ---------------------------------------------------------------------------
# thresholds, schedules, conditions


def test_calibrate_threshold_arithmetic():
    assert gating.calibrate_threshold([1.0, 2.0, 3.0], 2.0) == 4.0
    assert gating.calibrate_threshold([1.0, 2.0, 3.0], 1.0) == 2.0


def test_calibrate_threshold_monotone_in_factor():
    measures = np.random.default_rng(0).uniform(0.1, 2.0, size=50)
    ts = [gating.calibrate_threshold(measures, L) for L in (0.5, 1.0, 2.0, 4.0)]
    assert ts == sorted(ts) and len(set(ts)) == 4


def test_calibrate_threshold_errors():
    with pytest.raises(ValueError):
        gating.calibrate_threshold([], 2.0)
    with pytest.raises(ValueError):
        gating.calibrate_threshold([1.0], 0.0)


def test_lazy_thresholds():
    assert gating.lazy_thresholds(4.0, 2.0) == 2.0
    assert gating.lazy_thresholds(3.0, 1.0) == 3.0
    with pytest.raises(ValueError):
        gating.lazy_thresholds(3.0, 0.5)


def test_lazy_condition_modes():
    bh, br = 4.0, 2.0
    for mode in ("literal", "hysteresis"):
        assert gating.lazy_condition(5.0, bh, br, "novice", mode) is True
        assert gating.lazy_condition(1.0, bh, br, "novice", mode) is False
        assert gating.lazy_condition(5.0, bh, br, "expert", mode) is True
        assert gating.lazy_condition(1.0, bh, br, "expert", mode) is False
    # in-band: literal says expert, hysteresis keeps the current controller
    assert gating.lazy_condition(3.0, bh, br, "novice", "literal") is True
    assert gating.lazy_condition(3.0, bh, br, "novice", "hysteresis") is False
    assert gating.lazy_condition(3.0, bh, br, "expert", "hysteresis") is True


def test_ensemble_condition():
    assert gating.ensemble_condition(0.0, 0.0, 1.0, 1.0) is False
    assert gating.ensemble_condition(1e-9, 0.0, 0.0, 1.0) is True  # zero doubt threshold
    assert gating.ensemble_condition(0.5, 2.0, 1.0, 1.0) is True  # discrepancy alone


def test_dagger_beta():
    assert gating.dagger_beta(0.5, 0) == 1.0
    assert gating.dagger_beta(0.5, 2) == 0.25
    assert gating.dagger_beta(1.0, 5) == 1.0
    with pytest.raises(ValueError):
        gating.dagger_beta(0.0, 1)
    with pytest.raises(ValueError):
        gating.dagger_beta(1.5, 1)


# ---------------------------------------------------------------------------
# handover state machine


LO, HI = 0.2, 5.0  # around threshold 1.0


def test_gate_w0_basic():
    controllers, nswitch = run_gate(1.0, 0, [LO, HI, LO])
    assert controllers == ["novice", "expert", "novice"]
    assert nswitch == 1


def test_gate_w2_dwell_extends_intervention():
    controllers, nswitch = run_gate(1.0, 2, [LO, HI, LO, LO, LO])
    assert controllers == ["novice", "expert", "expert", "expert", "novice"]
    assert nswitch == 1


def test_gate_w2_respike_resets_dwell():
    controllers, nswitch = run_gate(1.0, 2, [HI, LO, HI, LO, LO, LO])
    assert controllers == ["expert"] * 5 + ["novice"]
    assert nswitch == 1


def test_gate_novice_not_retriggered_after_handback():
    controllers, nswitch = run_gate(1.0, 3, [HI, LO, LO, LO, LO, LO, LO])
    assert controllers == ["expert"] * 4 + ["novice"] * 3
    assert nswitch == 1


def test_gate_matches_interpreter_on_spec_traces():
    for W, seq in [(0, [LO, HI, LO]), (2, [LO, HI, LO, LO, LO]),
                   (2, [HI, LO, HI, LO, LO, LO])]:
        assert run_gate(1.0, W, seq) == interpret_gate_sequence(1.0, W, seq)


def test_gate_oracle_equivalence_random():
    rng = np.random.default_rng(2024)
    for _ in range(2000):
        threshold = float(rng.uniform(0.05, 3.0))
        W = int(rng.integers(0, 6))
        n = int(rng.integers(1, 40))
        measures = rng.exponential(scale=threshold, size=n).tolist()
        got = run_gate(threshold, W, measures)
        want = interpret_gate_sequence(threshold, W, measures)
        assert got == want


def test_gate_w0_interval_lengths_equal_superthreshold_runs():
    rng = np.random.default_rng(7)
    for _ in range(200):
        threshold = 1.0
        measures = rng.exponential(scale=1.0, size=60)
        controllers, _ = run_gate(threshold, 0, measures)
        for who, m in zip(controllers, measures):
            assert (who == "expert") == (m > threshold)


def _expert_intervals(controllers):
    intervals = []
    start = None
    for i, who in enumerate(controllers):
        if who == "expert" and start is None:
            start = i
        elif who == "novice" and start is not None:
            intervals.append((start, i))
            start = None
    if start is not None:
        intervals.append((start, len(controllers)))
    return intervals


def test_gate_completed_intervals_end_with_w_subthreshold_steps():
    rng = np.random.default_rng(8)
    for _ in range(300):
        W = int(rng.integers(1, 5))
        threshold = 1.0
        measures = rng.exponential(scale=0.9, size=80)
        controllers, _ = run_gate(threshold, W, measures)
        for start, stop in _expert_intervals(controllers):
            if stop == len(controllers):
                continue  # interval cut off by end of sequence
            tail = measures[stop - W:stop]
            assert all(m <= threshold for m in tail)
            if stop - W - 1 >= start:
                assert measures[stop - W - 1] > threshold or stop - W == start


def test_gate_nswitch_counts_maximal_expert_intervals():
    rng = np.random.default_rng(9)
    for _ in range(500):
        W = int(rng.integers(0, 5))
        threshold = float(rng.uniform(0.2, 2.0))
        measures = rng.exponential(scale=1.0, size=int(rng.integers(1, 60)))
        controllers, nswitch = run_gate(threshold, W, measures)
        assert nswitch == len(_expert_intervals(controllers))


def test_gate_episode_reset_keeps_switch_count():
    state = GateState(threshold=1.0, met_window=2)
    _, state = gate_step(state, HI)
    _, state = gate_step(state, LO)
    assert state.controller == "expert" and state.switch_count == 1
    state = state.reset_episode()
    assert state.controller == "novice"
    assert state.dwell == 0
    assert state.switch_count == 1

"""Intervention decision machinery.

The distillation-based out-of-distribution measure (frozen random target
network, trained predictor), historic context stacking, threshold
calibration from training-set statistics, the DAgger expert-probability
schedule, the Lazy and Ensemble trigger conditions, and the control-handover
state machine with its minimal-expert-time dwell.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import nncore

NOVICE, EXPERT = "novice", "expert"


# ---------------------------------------------------------------------------
# distillation pair and historic context


@dataclass
class RndPair:
    """Frozen target net + trainable predictor over contextualized inputs.

    Inputs are z-scored with statistics taken from the training dataset
    before both forward passes; the target never changes after construction.
    """

    target: nncore.NetParams
    predictor: nncore.NetParams
    context_length: int
    input_dim: int
    norm_mean: np.ndarray
    norm_std: np.ndarray

    def copy(self) -> "RndPair":
        return RndPair(self.target, self.predictor.copy(), self.context_length,
                       self.input_dim, self.norm_mean.copy(), self.norm_std.copy())


def rnd_init(observation_dim, context_length=0, hidden=32, n_layers=0,
             output_dim=16, activation="relu", seed=0) -> RndPair:
    """Build a target/predictor pair; n_layers=0 means a single affine map."""
    if context_length < 0:
        raise ValueError("context_length must be >= 0")
    input_dim = observation_dim * (context_length + 1)
    widths = [input_dim] + [hidden] * n_layers + [output_dim]
    ss = np.random.SeedSequence(seed)
    target_seed, predictor_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    return RndPair(
        target=nncore.net_init(widths, activation, target_seed),
        predictor=nncore.net_init(widths, activation, predictor_seed),
        context_length=context_length,
        input_dim=input_dim,
        norm_mean=np.zeros(input_dim),
        norm_std=np.ones(input_dim),
    )


class ContextBuffer:
    """Ring of the last H observations; cleared at every episode reset."""

    def __init__(self, context_length: int):
        self.context_length = context_length
        self.frames: deque = deque(maxlen=max(context_length, 1))

    def reset(self) -> None:
        self.frames.clear()

    def push(self, obs) -> None:
        if self.context_length > 0:
            self.frames.append(np.asarray(obs, dtype=np.float64))

    def vector(self, obs) -> np.ndarray:
        return context_vector(self, obs)


def context_vector(buffer: ContextBuffer, obs) -> np.ndarray:
    """[obs_{t-H}, ..., obs_{t-1}, obs_t]; early slots repeat the oldest frame."""
    obs = np.asarray(obs, dtype=np.float64)
    H = buffer.context_length
    if H == 0:
        return obs
    frames = list(buffer.frames)
    pad = frames[0] if frames else obs
    stacked = [pad] * (H - len(frames)) + frames + [obs]
    return np.concatenate(stacked)


def _normalize(pair: RndPair, X: np.ndarray) -> np.ndarray:
    return (X - pair.norm_mean) / pair.norm_std


def rnd_measure(pair: RndPair, vec) -> float:
    """Squared distance between target and predictor outputs on one input."""
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (pair.input_dim,):
        raise ValueError(f"expected input of shape ({pair.input_dim},), got {v.shape}")
    z = _normalize(pair, v)
    diff = nncore.net_forward(pair.target, z) - nncore.net_forward(pair.predictor, z)
    return float(diff @ diff)


def rnd_measures_batch(pair: RndPair, X: np.ndarray) -> np.ndarray:
    Z = _normalize(pair, np.asarray(X, dtype=np.float64))
    diff = nncore.net_forward_batch(pair.target, Z) - nncore.net_forward_batch(pair.predictor, Z)
    return np.sum(diff * diff, axis=1)


def rnd_train_arrays(pair: RndPair, contexts: np.ndarray, epochs=30,
                     learning_rate=1e-3, seed=0, batch_size=128) -> RndPair:
    """Fit the predictor to the target on the given contextualized inputs.

    Normalization statistics are recomputed from the inputs first; the
    target is untouched. Returns a new pair.
    """
    X = np.asarray(contexts, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a nonempty (n, input_dim) matrix of contexts")
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), 1e-6)
    new = RndPair(pair.target, pair.predictor.copy(), pair.context_length,
                  pair.input_dim, mean, std)
    Z = _normalize(new, X)
    targets = nncore.net_forward_batch(new.target, Z)
    rng = np.random.default_rng(seed)
    opt = nncore.init_opt_state(new.predictor, "adam", learning_rate)
    params = new.predictor
    n = len(Z)
    bs = min(batch_size, n)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            grads = nncore.net_grad(params, Z[idx], targets[idx], "mse")
            params, opt = nncore.opt_step(params, grads, opt)
        for arr in params.weights + params.biases:
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite predictor after epoch {epoch}")
    new.predictor = params
    return new


def rnd_train(pair: RndPair, dataset, epochs=30, learning_rate=1e-3, seed=0) -> RndPair:
    """Train the predictor on a Dataset's recorded context vectors."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    return rnd_train_arrays(pair, dataset.contexts(), epochs, learning_rate, seed)


# ---------------------------------------------------------------------------
# thresholds and trigger conditions


def calibrate_threshold(measures, factor) -> float:
    """Threshold = mean measure on the training set times a positive factor."""
    measures = np.asarray(measures, dtype=np.float64)
    if measures.size == 0:
        raise ValueError("cannot calibrate from an empty measure list")
    if factor <= 0:
        raise ValueError("factor must be > 0")
    return float(measures.mean() * factor)


def lazy_thresholds(enter_threshold, exit_divider) -> float:
    """Exit threshold for the hysteresis band: enter divided by the divider."""
    if exit_divider < 1:
        raise ValueError("exit divider must be >= 1")
    return enter_threshold / exit_divider


def lazy_condition(measure, enter_threshold, exit_threshold, controller=NOVICE,
                   mode="hysteresis") -> bool:
    """Expert-control decision from the two-threshold discrepancy rule.

    literal: true above the enter threshold, false below the exit
    threshold, true in between (so true iff measure >= exit threshold,
    regardless of who controls).
    hysteresis (default): stateful band. A novice hands over only above
    the enter threshold; an expert hands back only below the exit threshold.
    """
    if exit_threshold > enter_threshold:
        raise ValueError("exit threshold must not exceed enter threshold")
    if mode == "literal":
        if measure > enter_threshold:
            return True
        if measure < exit_threshold:
            return False
        return True
    if mode != "hysteresis":
        raise ValueError(f"unknown mode {mode!r}")
    if controller == NOVICE:
        return measure > enter_threshold
    return not (measure < exit_threshold)


def ensemble_condition(doubt, discrepancy, doubt_threshold, discrepancy_threshold) -> bool:
    """True iff the ensemble disagrees too much or strays from the expert."""
    if doubt_threshold < 0 or discrepancy_threshold < 0:
        raise ValueError("thresholds must be >= 0")
    return doubt > doubt_threshold or discrepancy > discrepancy_threshold


def dagger_beta(beta0, iteration) -> float:
    """Expert-control probability at a given iteration: beta0 ** iteration."""
    if not 0 < beta0 <= 1:
        raise ValueError("beta0 must be in (0, 1]")
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return float(beta0) ** int(iteration)


# ---------------------------------------------------------------------------
# control-handover state machine with minimal-expert-time dwell


@dataclass
class GateState:
    """Who controls, the in-distribution dwell counter, and the switch count.

    The dwell counter tracks consecutive sub-threshold steps during an
    expert intervention; control returns to the novice only once it reaches
    met_window. A handover (novice -> expert) increments switch_count.
    """

    threshold: float
    met_window: int = 0
    controller: str = NOVICE
    dwell: int = 0
    switch_count: int = 0
    prev_measure: float = 0.0

    def reset_episode(self) -> "GateState":
        """New episode: novice control, dwell cleared; switch_count persists."""
        return replace(self, controller=NOVICE, dwell=0, prev_measure=0.0)


def gate_step(state: GateState, measure) -> tuple[str, GateState]:
    """One step of the handover machine; returns (controller for this step, new state).

    The expert controls when the measure exceeds the threshold, or while an
    ongoing intervention has not yet seen met_window consecutive
    sub-threshold steps. The dwell counter increments on sub-threshold
    expert steps and resets on super-threshold steps and on novice steps.
    The switch count increments exactly when control passes from the novice
    to the expert with the previous measure at or below the threshold.
    """
    m = float(measure)
    over = m > state.threshold
    holding = state.controller == EXPERT and state.dwell < state.met_window
    if over or holding:
        dwell = 0 if over else state.dwell + 1
        switched = state.controller == NOVICE and state.prev_measure <= state.threshold
        new = replace(state, controller=EXPERT, dwell=dwell,
                      switch_count=state.switch_count + (1 if switched else 0),
                      prev_measure=m)
        return EXPERT, new
    new = replace(state, controller=NOVICE, dwell=0, prev_measure=m)
    return NOVICE, new

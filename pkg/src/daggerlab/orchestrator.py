"""Active imitation learning loops and metrics accounting.

One function per method: plain behavioral cloning, probability-mixed
expert control, condition-gated control (lazy and ensemble triggers),
distillation-gated control with the minimal-expert-time dwell, and
human-gated control via a provider that signals takeover and handback.

Expert-frame accounting: methods whose trigger needs the expert's action
(dagger, lazy, ensemble) pay one expert frame per sampled step; gated
methods (rnd, hg) pay only for frames the expert actually controls. The
seed dataset is counted in dataset_size but not in expert_frames.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

import numpy as np

from . import gating, policy as pol
from .envs import make_env
from .gating import ContextBuffer, GateState, gate_step
from .records import IterationRow, SessionMetrics

METHODS = ("bc", "dagger", "lazy", "ensemble", "rnd", "hg")


class LivenessError(RuntimeError):
    """An iteration could not fill its sample quota within the step guard."""


class ProviderDisconnected(RuntimeError):
    """The expert channel dropped mid-episode."""


@dataclass
class RunConfig:
    env: str = "racetrack2d"
    method: str = "rnd"
    seed: int = 0
    iterations: int = 5                 # K
    samples_per_iteration: int = 500    # T
    seed_episodes: int = 2
    eval_episodes: int = 100
    # policy training
    policy_hidden: tuple[int, ...] = (32, 32)
    policy_activation: str = "relu"
    bc_epochs: int = 50
    bc_batch_size: int = 64
    bc_learning_rate: float = 1e-3
    goal_conditioned: bool = True
    # dagger
    dagger_beta0: float = 0.5
    # ensemble trigger
    ensemble_size: int = 5
    doubt_factor: float = 1.5
    discrepancy_factor: float = 1.5
    # lazy trigger
    enter_factor: float = 1.5
    exit_divider: float = 2.0
    lazy_mode: str = "hysteresis"
    # distillation gate
    rnd_threshold_factor: float = 2.0
    rnd_hidden: int = 32
    rnd_layers: int = 0
    rnd_output_dim: int = 16
    rnd_activation: str = "relu"
    rnd_epochs: int = 30
    rnd_learning_rate: float = 1e-3
    context_length: int = 10            # H
    # minimal expert time dwell (rnd always; lazy/ensemble as optional wrapper)
    met_window: int = 0                 # W
    # liveness guard; 0 means max(50, 20 * samples_per_iteration)
    max_steps_guard: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.iterations < 1 or self.samples_per_iteration < 1:
            raise ValueError("iterations and samples_per_iteration must be >= 1")
        if self.method == "ensemble" and self.ensemble_size < 2:
            raise ValueError("ensemble method needs ensemble_size >= 2")
        if self.met_window < 0 or self.context_length < 0:
            raise ValueError("met_window and context_length must be >= 0")
        self.policy_hidden = tuple(int(h) for h in self.policy_hidden)

    @property
    def steps_guard(self) -> int:
        return self.max_steps_guard or max(50, 20 * self.samples_per_iteration)


def derive_seed(master: int, *tags) -> int:
    """Stable 63-bit stream seed from the master seed and a tag path."""
    text = "/".join(str(t) for t in tags)
    digest = hashlib.sha256(f"{master}/{text}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------------------
# expert providers


class OracleExpert:
    """Scripted controller answering synchronously from the full env state."""

    kind = "oracle"

    def action(self, env, state, obs):
        return env.oracle_action(state)


class ScriptedGatedExpert:
    """Deterministic stand-in for a monitoring human: takes over when the
    novice has made no progress for a while, hands back after recovering."""

    kind = "human_gated"

    def __init__(self, patience=12, recovery_steps=8):
        self.patience = patience
        self.recovery_steps = recovery_steps
        self._stall = 0
        self._held = 0
        self._last_signature = None

    def start_episode(self):
        self._stall = 0
        self._held = 0
        self._last_signature = None

    def action(self, env, state, obs):
        return env.oracle_action(state)

    def wants_control(self, env, state, obs, currently_expert):
        signature = round(float(np.asarray(obs[:2]).sum()), 3)
        if currently_expert:
            self._held += 1
            if self._held >= self.recovery_steps:
                self._held = 0
                self._stall = 0
                return False
            return True
        if signature == self._last_signature:
            self._stall += 1
        else:
            self._stall = 0
        self._last_signature = signature
        if self._stall >= self.patience:
            self._held = 0
            return True
        return False


# ---------------------------------------------------------------------------
# shared plumbing


def expert_minutes(frames: int, env_spec) -> float:
    """Expert wall time implied by a frame count at the env's action rate."""
    if frames < 0:
        raise ValueError("frames must be >= 0")
    return frames / (env_spec.frame_rate * 60.0)


def collect_seed_dataset(env, expert, episodes: int, seed: int,
                         context_length: int = 0) -> list[pol.TransitionSample]:
    """Full expert rollouts forming the bootstrap block; deterministic in seed."""
    if episodes < 1:
        raise ValueError("need at least one seed episode")
    rng = np.random.default_rng(seed)
    block = []
    buf = ContextBuffer(context_length)
    for ep in range(episodes):
        state, obs = env.reset(int(rng.integers(2**63)))
        buf.reset()
        t = 0
        while not state.done:
            a = expert.action(env, state, obs)
            block.append(pol.TransitionSample(
                observation=obs, action=a, controller=pol.EXPERT,
                episode=ep, t=t, iteration=-1, context=buf.vector(obs)))
            buf.push(obs)
            state, res = env.step(state, a)
            obs = res.observation
            t += 1
    return block


def _template(config: RunConfig, env) -> pol.PolicyTemplate:
    return pol.PolicyTemplate(
        env_spec=env.spec, hidden=config.policy_hidden,
        activation=config.policy_activation,
        goal_conditioned=config.goal_conditioned,
    )


def _train(config, dataset, template, iteration):
    return pol.bc_train(
        dataset, template, epochs=config.bc_epochs, batch_size=config.bc_batch_size,
        learning_rate=config.bc_learning_rate,
        seed=derive_seed(config.seed, "bc", iteration))


def _actor_outputs(policy_like, obs):
    """(output vector, doubt or None) for a single policy or an ensemble."""
    if isinstance(policy_like, list):
        return pol.ensemble_mean_and_doubt(policy_like, obs)
    return pol.policy_forward(policy_like, obs), None


def _act_from_output(policy_like, output):
    head = policy_like[0] if isinstance(policy_like, list) else policy_like
    if head.head == "discrete":
        return int(np.argmax(output))
    return np.clip(output, head.action_low, head.action_high)


def evaluate(policy_like, env, episodes: int, seed: int) -> float:
    """Deterministic rollouts over seeded resets, stepped in lockstep.

    Success-based envs score the success fraction; the locomotor scores
    mean cumulative progress.
    """
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    rng = np.random.default_rng(seed)
    states, observations = [], []
    for _ in range(episodes):
        s, o = env.reset(int(rng.integers(2**63)))
        states.append(s)
        observations.append(o)
    members = policy_like if isinstance(policy_like, list) else [policy_like]
    alive = list(range(episodes))
    successes = np.zeros(episodes, dtype=bool)
    progress = np.zeros(episodes)
    while alive:
        X = np.stack([observations[i] for i in alive])
        outs = np.mean([pol.policy_forward_batch(m, X) for m in members], axis=0)
        still = []
        for row, i in enumerate(alive):
            states[i], res = env.step(states[i], _act_from_output(members[0], outs[row]))
            observations[i] = res.observation
            progress[i] += res.progress
            if res.done:
                successes[i] = res.success
            else:
                still.append(i)
        alive = still
    if env.spec.env_id == "pointdash":
        return float(progress.mean())
    return float(successes.mean())


class _Collector:
    """Episode bookkeeping for one iteration's sample collection."""

    def __init__(self, config, env, context_length, trace, on_frame, iteration,
                 episode_start, expert=None):
        self.config = config
        self.env = env
        self.trace = trace
        self.on_frame = on_frame
        self.iteration = iteration
        self.episode = episode_start - 1
        self.buf = ContextBuffer(context_length)
        self.rng = np.random.default_rng(derive_seed(config.seed, "rollout", iteration))
        self.state = None
        self.obs = None
        self.t = 0
        self.steps = 0
        self.expert = expert
        self._begin_episode()

    def _begin_episode(self):
        self.episode += 1
        self.state, self.obs = self.env.reset(int(self.rng.integers(2**63)))
        self.buf.reset()
        self.t = 0
        if self.expert is not None and hasattr(self.expert, "start_episode"):
            self.expert.start_episode()

    def context(self):
        return self.buf.vector(self.obs)

    def advance(self, action):
        """Step the env; returns True if the episode ended (and a new one began)."""
        self.buf.push(self.obs)
        self.state, res = self.env.step(self.state, action)
        self.obs = res.observation
        self.t += 1
        self.steps += 1
        if res.done:
            self._begin_episode()
            return True
        return False

    def check_guard(self, collected):
        if self.steps > self.config.steps_guard and collected < self.config.samples_per_iteration:
            raise LivenessError(
                f"iteration {self.iteration} of {self.config.method} on {self.config.env}: "
                f"{collected}/{self.config.samples_per_iteration} samples after "
                f"{self.steps} steps (guard {self.config.steps_guard}); "
                "the trigger condition is starving the collection loop")


def _stream(collector, controller, measure=None, threshold=None, dwell=None,
            autonomous=False):
    """Frame callback, fired before the step's action is resolved."""
    if collector.on_frame is not None:
        collector.on_frame({
            "episode": collector.episode, "t": collector.t,
            "observation": collector.obs, "controller": controller,
            "measure": measure, "threshold": threshold, "dwell": dwell,
            "autonomous": autonomous, "state": collector.state,
        })


def _trace(collector, action, controller, measure=None, threshold=None, dwell=None):
    if collector.trace is not None:
        collector.trace.record(collector.episode, collector.t, collector.obs, action,
                               controller, measure, threshold, dwell)


def _emit(collector, action, controller, measure=None, threshold=None, dwell=None,
          autonomous=False):
    _stream(collector, controller, measure, threshold, dwell, autonomous)
    _trace(collector, action, controller, measure, threshold, dwell)


def _mean_threshold(values, factor) -> float:
    """mean * factor calibration; a zero factor yields an always-on trigger."""
    if factor == 0:
        return 0.0
    return gating.calibrate_threshold(values, factor)


# ---------------------------------------------------------------------------
# method runners


def run_bc(config: RunConfig, expert=None, trace=None):
    env = make_env(config.env)
    expert = expert or OracleExpert()
    block = collect_seed_dataset(env, expert, config.seed_episodes,
                                 derive_seed(config.seed, "seed-data"),
                                 config.context_length)
    dataset = pol.Dataset([block])
    template = _template(config, env)
    trained = _train(config, dataset, template, 0)
    perf = evaluate(trained, env, config.eval_episodes, derive_seed(config.seed, "eval"))
    metrics = SessionMetrics([IterationRow(
        method="bc", env=config.env, seed=config.seed, iteration=0,
        dataset_size=len(dataset), task_performance=perf,
        nswitch=None, expert_frames=0, monitoring_frames=None,
        expert_minutes=0.0, collection_steps=0)])
    return trained, metrics


def run_dagger(config: RunConfig, expert=None, trace=None):
    env = make_env(config.env)
    expert = expert or OracleExpert()
    template = _template(config, env)
    block = collect_seed_dataset(env, expert, config.seed_episodes,
                                 derive_seed(config.seed, "seed-data"),
                                 config.context_length)
    dataset = pol.Dataset([block])
    trained = _train(config, dataset, template, 0)
    eval_seed = derive_seed(config.seed, "eval")
    metrics = SessionMetrics()
    expert_frames = 0
    steps_total = 0
    episode_start = config.seed_episodes
    for i in range(config.iterations):
        beta = gating.dagger_beta(config.dagger_beta0, i)
        col = _Collector(config, env, config.context_length, trace, None, i,
                         episode_start)
        block_i = []
        while len(block_i) < config.samples_per_iteration:
            a_exp = expert.action(env, col.state, col.obs)
            expert_frames += 1
            use_expert = col.rng.random() < beta
            executed = a_exp if use_expert else pol.policy_act(trained, col.obs)
            # the expert's label is stored every step regardless of control
            block_i.append(pol.TransitionSample(
                observation=col.obs, action=a_exp, controller=pol.EXPERT,
                episode=col.episode, t=col.t, iteration=i, context=col.context()))
            _emit(col, executed, "expert" if use_expert else "novice")
            col.advance(executed)
            col.check_guard(len(block_i))
        dataset.append_block(block_i)
        episode_start = col.episode + 1
        steps_total += col.steps
        trained = _train(config, dataset, template, i + 1)
        perf = evaluate(trained, env, config.eval_episodes, eval_seed)
        metrics.rows.append(IterationRow(
            method="dagger", env=config.env, seed=config.seed, iteration=i,
            dataset_size=len(dataset), task_performance=perf, nswitch=None,
            expert_frames=expert_frames, monitoring_frames=None,
            expert_minutes=expert_minutes(expert_frames, env.spec),
            collection_steps=steps_total))
    return trained, metrics


def run_condition_dagger(config: RunConfig, expert=None, trace=None):
    """Condition-gated loop shared by the lazy and ensemble triggers."""
    if config.method not in ("lazy", "ensemble"):
        raise ValueError("run_condition_dagger handles methods 'lazy' and 'ensemble'")
    env = make_env(config.env)
    expert = expert or OracleExpert()
    template = _template(config, env)
    block = collect_seed_dataset(env, expert, config.seed_episodes,
                                 derive_seed(config.seed, "seed-data"),
                                 config.context_length)
    dataset = pol.Dataset([block])

    def retrain(iteration):
        if config.method == "ensemble":
            return pol.ensemble_train(
                dataset, template, config.ensemble_size, epochs=config.bc_epochs,
                batch_size=config.bc_batch_size, learning_rate=config.bc_learning_rate,
                seed=derive_seed(config.seed, "bc", iteration))
        return _train(config, dataset, template, iteration)

    actor = retrain(0)
    eval_seed = derive_seed(config.seed, "eval")
    metrics = SessionMetrics()
    expert_frames = 0
    nswitch_total = 0
    steps_total = 0
    episode_start = config.seed_episodes
    for i in range(config.iterations):
        # recalibrate thresholds from the aggregate before each iteration
        expert_block = dataset.expert_samples()
        doubts, discs = [], []
        for s in expert_block:
            out, doubt = _actor_outputs(actor, s.observation)
            head = actor[0] if isinstance(actor, list) else actor
            discs.append(pol.expert_discrepancy(head, s.action, out))
            if doubt is not None:
                doubts.append(doubt)
        if config.method == "ensemble":
            doubt_threshold = _mean_threshold(doubts, config.doubt_factor)
            disc_threshold = _mean_threshold(discs, config.discrepancy_factor)
        else:
            enter = _mean_threshold(discs, config.enter_factor)
            exit_ = gating.lazy_thresholds(enter, config.exit_divider)

        gate = GateState(threshold=0.5, met_window=config.met_window,
                         switch_count=nswitch_total)
        col = _Collector(config, env, config.context_length, trace, None, i,
                         episode_start)
        block_i = []
        while len(block_i) < config.samples_per_iteration:
            a_exp = expert.action(env, col.state, col.obs)
            expert_frames += 1  # the trigger consults the expert every step
            out, doubt = _actor_outputs(actor, col.obs)
            head = actor[0] if isinstance(actor, list) else actor
            disc = pol.expert_discrepancy(head, a_exp, out)
            if config.method == "ensemble":
                cond = gating.ensemble_condition(doubt, disc, doubt_threshold, disc_threshold)
                threshold_for_trace = disc_threshold
            else:
                cond = gating.lazy_condition(disc, enter, exit_, gate.controller,
                                             config.lazy_mode)
                threshold_for_trace = enter
            controller, gate = gate_step(gate, 1.0 if cond else 0.0)
            if controller == gating.EXPERT:
                block_i.append(pol.TransitionSample(
                    observation=col.obs, action=a_exp, controller=pol.EXPERT,
                    episode=col.episode, t=col.t, iteration=i, context=col.context()))
                executed = a_exp
            else:
                executed = _act_from_output(actor, out)
            _emit(col, executed, controller, measure=disc,
                  threshold=threshold_for_trace, dwell=gate.dwell)
            if col.advance(executed):
                gate = gate.reset_episode()
            col.check_guard(len(block_i))
        dataset.append_block(block_i)
        nswitch_total = gate.switch_count
        episode_start = col.episode + 1
        steps_total += col.steps
        actor = retrain(i + 1)
        perf = evaluate(actor, env, config.eval_episodes, eval_seed)
        metrics.rows.append(IterationRow(
            method=config.method, env=config.env, seed=config.seed, iteration=i,
            dataset_size=len(dataset), task_performance=perf, nswitch=nswitch_total,
            expert_frames=expert_frames, monitoring_frames=None,
            expert_minutes=expert_minutes(expert_frames, env.spec),
            collection_steps=steps_total))
    return actor, metrics


def run_rnd_dagger(config: RunConfig, expert=None, trace=None, on_frame=None):
    """Distillation-gated loop. The bootstrap demonstrations always come from
    the scripted oracle (the paper's initial sets are collected offline);
    the expert provider, local or remote, serves interventions only."""
    env = make_env(config.env)
    expert = expert or OracleExpert()
    template = _template(config, env)
    block = collect_seed_dataset(env, OracleExpert(), config.seed_episodes,
                                 derive_seed(config.seed, "seed-data"),
                                 config.context_length)
    dataset = pol.Dataset([block])
    trained = _train(config, dataset, template, 0)
    pair = gating.rnd_init(
        env.spec.observation_dim, config.context_length, config.rnd_hidden,
        config.rnd_layers, config.rnd_output_dim, config.rnd_activation,
        derive_seed(config.seed, "rnd-init"))
    # bootstrap the predictor on the seed demonstrations, mirroring the
    # bootstrap BC fit of the first policy
    pair = gating.rnd_train(pair, dataset, config.rnd_epochs,
                            config.rnd_learning_rate, derive_seed(config.seed, "rnd", 0))
    eval_seed = derive_seed(config.seed, "eval")
    metrics = SessionMetrics()
    expert_frames = 0
    nswitch_total = 0
    steps_total = 0
    episode_start = config.seed_episodes
    for i in range(config.iterations):
        threshold = gating.calibrate_threshold(
            gating.rnd_measures_batch(pair, dataset.contexts()),
            config.rnd_threshold_factor)
        gate = GateState(threshold=threshold, met_window=config.met_window,
                         switch_count=nswitch_total)
        col = _Collector(config, env, config.context_length, trace, on_frame, i,
                         episode_start, expert=expert)
        block_i = []
        while len(block_i) < config.samples_per_iteration:
            ctx = col.context()
            measure = gating.rnd_measure(pair, ctx)
            controller, gate = gate_step(gate, measure)
            _stream(col, controller, measure, threshold, gate.dwell,
                    autonomous=controller == gating.NOVICE)
            if controller == gating.EXPERT:
                executed = expert.action(env, col.state, col.obs)
                expert_frames += 1
                block_i.append(pol.TransitionSample(
                    observation=col.obs, action=executed, controller=pol.EXPERT,
                    episode=col.episode, t=col.t, iteration=i, context=ctx))
            else:
                executed = pol.policy_act(trained, col.obs)
            _trace(col, executed, controller, measure, threshold, gate.dwell)
            if col.advance(executed):
                gate = gate.reset_episode()
            col.check_guard(len(block_i))
        dataset.append_block(block_i)
        nswitch_total = gate.switch_count
        episode_start = col.episode + 1
        steps_total += col.steps
        trained = _train(config, dataset, template, i + 1)
        pair = gating.rnd_train(pair, dataset, config.rnd_epochs,
                                config.rnd_learning_rate,
                                derive_seed(config.seed, "rnd", i + 1))
        perf = evaluate(trained, env, config.eval_episodes, eval_seed)
        metrics.rows.append(IterationRow(
            method="rnd", env=config.env, seed=config.seed, iteration=i,
            dataset_size=len(dataset), task_performance=perf, nswitch=nswitch_total,
            expert_frames=expert_frames, monitoring_frames=None,
            expert_minutes=expert_minutes(expert_frames, env.spec),
            collection_steps=steps_total))
    return trained, metrics


def run_hg_dagger(config: RunConfig, expert, trace=None, on_frame=None):
    """Human-gated loop: the provider decides takeover and handback.

    Every frame counts as monitoring (the human watches continuously);
    expert_frames accrue only while the expert drives. A dropped channel
    discards the in-flight episode's samples and continues.
    """
    env = make_env(config.env)
    template = _template(config, env)
    block = collect_seed_dataset(env, OracleExpert(), config.seed_episodes,
                                 derive_seed(config.seed, "seed-data"),
                                 config.context_length)
    dataset = pol.Dataset([block])
    trained = _train(config, dataset, template, 0)
    eval_seed = derive_seed(config.seed, "eval")
    metrics = SessionMetrics()
    expert_frames = 0
    monitoring_frames = 0
    nswitch_total = 0
    steps_total = 0
    episode_start = config.seed_episodes
    for i in range(config.iterations):
        col = _Collector(config, env, config.context_length, trace, on_frame, i,
                         episode_start, expert=expert)
        block_i = []
        staged = []
        currently_expert = False
        while len(block_i) + len(staged) < config.samples_per_iteration:
            monitoring_frames += 1
            try:
                desired = expert.wants_control(env, col.state, col.obs, currently_expert)
                if desired and not currently_expert:
                    nswitch_total += 1
                currently_expert = desired
                _stream(col, "expert" if currently_expert else "novice",
                        autonomous=not currently_expert)
                if currently_expert:
                    executed = expert.action(env, col.state, col.obs)
                    expert_frames += 1
                    staged.append(pol.TransitionSample(
                        observation=col.obs, action=executed, controller=pol.EXPERT,
                        episode=col.episode, t=col.t, iteration=i, context=col.context()))
                else:
                    executed = pol.policy_act(trained, col.obs)
            except ProviderDisconnected:
                staged = []  # discard the in-flight episode
                col._begin_episode()
                currently_expert = False
                continue
            _trace(col, executed, "expert" if currently_expert else "novice")
            if col.advance(executed):
                block_i.extend(staged)
                staged = []
                currently_expert = False
            col.check_guard(len(block_i) + len(staged))
        block_i.extend(staged)
        block_i = block_i[:config.samples_per_iteration]
        dataset.append_block(block_i)
        episode_start = col.episode + 1
        steps_total += col.steps
        trained = _train(config, dataset, template, i + 1)
        perf = evaluate(trained, env, config.eval_episodes, eval_seed)
        metrics.rows.append(IterationRow(
            method="hg", env=config.env, seed=config.seed, iteration=i,
            dataset_size=len(dataset), task_performance=perf, nswitch=nswitch_total,
            expert_frames=expert_frames, monitoring_frames=monitoring_frames,
            expert_minutes=expert_minutes(expert_frames, env.spec),
            collection_steps=steps_total))
    return trained, metrics


def run_method(config: RunConfig, expert=None, trace=None, on_frame=None):
    """Dispatch one configured run; returns (policy or ensemble, SessionMetrics)."""
    if config.method == "bc":
        return run_bc(config, expert, trace)
    if config.method == "dagger":
        return run_dagger(config, expert, trace)
    if config.method in ("lazy", "ensemble"):
        return run_condition_dagger(config, expert, trace)
    if config.method == "rnd":
        return run_rnd_dagger(config, expert, trace, on_frame)
    if config.method == "hg":
        return run_hg_dagger(config, expert or ScriptedGatedExpert(), trace, on_frame)
    raise ValueError(f"unknown method {config.method!r}")


def config_to_dict(config: RunConfig) -> dict:
    out = {}
    for f in fields(config):
        v = getattr(config, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def config_from_dict(data: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**data)

"""Behavioral cloning policies, ensembles, and the aggregated expert dataset.

Training always starts from a fresh seeded initialization on the full
aggregate (no warm starts), reads only expert-tagged samples, and minimizes
softmax cross-entropy for discrete heads / squared error for continuous ones.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nncore
from .envs.base import EnvSpec

EXPERT, NOVICE = "expert", "novice"


@dataclass
class TransitionSample:
    observation: np.ndarray
    action: object  # int for discrete, float vector for continuous
    controller: str  # who produced the stored action
    episode: int
    t: int
    iteration: int
    context: np.ndarray | None = None  # history-concatenated input, when recorded


class Dataset:
    """Append-only aggregate of per-iteration sample blocks."""

    def __init__(self, blocks=None):
        self.blocks: list[list[TransitionSample]] = [list(b) for b in blocks] if blocks else []

    def append_block(self, samples) -> None:
        self.blocks.append(list(samples))

    def __len__(self) -> int:
        return sum(len(b) for b in self.blocks)

    def samples(self):
        for block in self.blocks:
            yield from block

    def expert_samples(self) -> list[TransitionSample]:
        return [s for s in self.samples() if s.controller == EXPERT]

    def contexts(self) -> np.ndarray:
        rows = [s.context for s in self.expert_samples()]
        if not rows or any(r is None for r in rows):
            raise ValueError("dataset has samples without recorded context vectors")
        return np.stack(rows)


@dataclass
class PolicyNet:
    """MLP policy: discrete logits head or bounded continuous mean head."""

    params: nncore.NetParams
    head: str  # "discrete" | "continuous"
    n_outputs: int
    observation_dim: int
    goal_conditioned: bool = True
    goal_slice: tuple[int, int] | None = None
    action_low: float = -1.0
    action_high: float = 1.0


@dataclass
class PolicyTemplate:
    """Everything bc_train needs to build a fresh policy."""

    env_spec: EnvSpec
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "relu"
    goal_conditioned: bool = True

    @property
    def head(self) -> str:
        return self.env_spec.action_kind

    @property
    def n_outputs(self) -> int:
        return self.env_spec.n_actions if self.head == "discrete" else self.env_spec.action_dim

    def widths(self) -> list[int]:
        return [self.env_spec.observation_dim, *self.hidden, self.n_outputs]


def policy_input(policy_or_template, obs: np.ndarray) -> np.ndarray:
    """Network input for an observation; goal-blind policies see zeroed goal dims."""
    p = policy_or_template
    goal_slice = p.goal_slice if isinstance(p, PolicyNet) else p.env_spec.goal_slice
    if p.goal_conditioned or goal_slice is None:
        return obs
    x = np.array(obs, dtype=np.float64)
    x[goal_slice[0]:goal_slice[1]] = 0.0
    return x


def policy_forward(policy: PolicyNet, obs) -> np.ndarray:
    return nncore.net_forward(policy.params, policy_input(policy, np.asarray(obs, dtype=np.float64)))


def policy_forward_batch(policy: PolicyNet, observations: np.ndarray) -> np.ndarray:
    X = np.asarray(observations, dtype=np.float64)
    if not policy.goal_conditioned and policy.goal_slice is not None:
        X = X.copy()
        X[:, policy.goal_slice[0]:policy.goal_slice[1]] = 0.0
    return nncore.net_forward_batch(policy.params, X)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def policy_act(policy: PolicyNet, obs, mode="deterministic", rng=None):
    """Action for one observation.

    Discrete deterministic: argmax logits, ties to the lowest index.
    Discrete stochastic: categorical sample from the softmax (needs rng).
    Continuous: mean vector clipped to the action bounds in both modes.
    """
    out = policy_forward(policy, obs)
    if policy.head == "continuous":
        return np.clip(out, policy.action_low, policy.action_high)
    if mode == "deterministic":
        return int(np.argmax(out))
    if rng is None:
        raise ValueError("stochastic mode needs an rng")
    return int(rng.choice(len(out), p=softmax(out)))


def _training_arrays(dataset: Dataset, template: PolicyTemplate):
    expert = dataset.expert_samples()
    if not expert:
        raise ValueError("dataset has no expert samples to train on")
    X = np.stack([policy_input(template, s.observation) for s in expert])
    if X.shape[1] != template.env_spec.observation_dim:
        raise ValueError(
            f"observation dim {X.shape[1]} does not match env spec "
            f"{template.env_spec.observation_dim}"
        )
    if template.head == "discrete":
        Y = np.array([int(s.action) for s in expert], dtype=np.int64)
    else:
        Y = np.stack([np.asarray(s.action, dtype=np.float64) for s in expert])
        if Y.shape[1] != template.n_outputs:
            raise ValueError(f"action dim {Y.shape[1]} does not match env spec")
    return X, Y


def _check_finite(params, epoch: int) -> None:
    for arr in params.weights + params.biases:
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite parameters after epoch {epoch}")


def bc_train(dataset: Dataset, template: PolicyTemplate, epochs=50, batch_size=64,
             learning_rate=1e-3, seed=0) -> PolicyNet:
    """Train a fresh policy on the full aggregate of expert-tagged samples."""
    X, Y = _training_arrays(dataset, template)
    rng = np.random.default_rng(seed)
    init_seed = int(rng.integers(2**63))
    params = nncore.net_init(template.widths(), template.activation, init_seed)
    loss = "softmax_cross_entropy" if template.head == "discrete" else "mse"
    opt = nncore.init_opt_state(params, "adam", learning_rate)
    n = len(X)
    bs = min(batch_size, n)
    cooldown = max(1, int(epochs * 0.75))  # final quarter runs at lr/10 to settle
    for epoch in range(epochs):
        if epoch == cooldown:
            opt.learning_rate = learning_rate * 0.1
        order = rng.permutation(n)
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            grads = nncore.net_grad(params, X[idx], Y[idx], loss)
            params, opt = nncore.opt_step(params, grads, opt)
        _check_finite(params, epoch)
    spec = template.env_spec
    return PolicyNet(
        params=params, head=template.head, n_outputs=template.n_outputs,
        observation_dim=spec.observation_dim,
        goal_conditioned=template.goal_conditioned, goal_slice=spec.goal_slice,
        action_low=spec.action_low, action_high=spec.action_high,
    )


def ensemble_train(dataset: Dataset, template: PolicyTemplate, n_members: int,
                   epochs=50, batch_size=64, learning_rate=1e-3, seed=0) -> list[PolicyNet]:
    """N independent bc_train runs on the same data, seeds seed+k."""
    if n_members < 2:
        raise ValueError("an ensemble needs at least 2 members")
    return [
        bc_train(dataset, template, epochs, batch_size, learning_rate, seed + k)
        for k in range(n_members)
    ]


def ensemble_mean_and_doubt(members: list[PolicyNet], obs):
    """Elementwise mean of member outputs and summed per-dim population variance."""
    if not members:
        raise ValueError("empty ensemble")
    outs = np.stack([policy_forward(m, obs) for m in members])
    mean = outs.mean(axis=0)
    doubt = float(outs.var(axis=0).sum())
    return mean, doubt


def action_as_vector(policy_like: PolicyNet, action, output_dim: int) -> np.ndarray:
    """Expert action in the same vector space as a policy output summary."""
    if policy_like.head == "discrete":
        v = np.zeros(output_dim)
        v[int(action)] = 1.0
        return v
    return np.asarray(action, dtype=np.float64)


def expert_discrepancy(policy_like: PolicyNet, expert_action, output_vector) -> float:
    """Squared distance between the expert action and a policy output.

    Discrete heads compare a one-hot expert action against the softmax of the
    (mean) logits; continuous heads compare bounded action vectors.
    """
    if policy_like.head == "discrete":
        probs = softmax(np.asarray(output_vector, dtype=np.float64))
        onehot = action_as_vector(policy_like, expert_action, len(probs))
        return float(np.sum((onehot - probs) ** 2))
    a = np.asarray(expert_action, dtype=np.float64)
    b = np.clip(np.asarray(output_vector, dtype=np.float64),
                policy_like.action_low, policy_like.action_high)
    return float(np.sum((a - b) ** 2))


def save_policy(path, policy: PolicyNet, extra: dict | None = None) -> None:
    meta = {
        "head": policy.head,
        "n_outputs": policy.n_outputs,
        "observation_dim": policy.observation_dim,
        "goal_conditioned": policy.goal_conditioned,
        "goal_slice": list(policy.goal_slice) if policy.goal_slice else None,
        "action_low": policy.action_low,
        "action_high": policy.action_high,
    }
    if extra:
        meta.update(extra)
    nncore.save_params(path, policy.params, meta)


def load_policy(path) -> PolicyNet:
    params, meta = nncore.load_params(path)
    if meta is None or "head" not in meta:
        raise ValueError(f"{path} is not a policy checkpoint")
    return PolicyNet(
        params=params, head=meta["head"], n_outputs=meta["n_outputs"],
        observation_dim=meta["observation_dim"],
        goal_conditioned=meta["goal_conditioned"],
        goal_slice=tuple(meta["goal_slice"]) if meta["goal_slice"] else None,
        action_low=meta["action_low"], action_high=meta["action_high"],
    )

"""Shared environment contract: specs, step results, action kinds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    observation_dim: int
    action_kind: str  # "discrete" | "continuous"
    max_episode_steps: int
    frame_rate: float
    n_actions: int = 0  # discrete only
    action_dim: int = 0  # continuous only
    action_low: float = 0.0
    action_high: float = 0.0
    goal_slice: tuple[int, int] | None = None  # [start, stop) indices inside the observation

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if self.goal_slice is not None:
            lo, hi = self.goal_slice
            if not (0 <= lo < hi <= self.observation_dim):
                raise ValueError("goal_slice outside the observation")


@dataclass
class StepResult:
    observation: np.ndarray
    done: bool
    success: bool
    progress: float = 0.0


def check_action(spec: EnvSpec, action):
    """Validate an action against the spec; returns the canonical form."""
    if spec.action_kind == "discrete":
        if isinstance(action, (np.ndarray, list, tuple)):
            raise ValueError(f"{spec.env_id} takes a discrete action index, got {action!r}")
        a = int(action)
        if not 0 <= a < spec.n_actions:
            raise ValueError(f"action {a} out of range [0, {spec.n_actions})")
        return a
    a = np.asarray(action, dtype=np.float64)
    if a.shape != (spec.action_dim,):
        raise ValueError(f"{spec.env_id} takes a ({spec.action_dim},) action, got shape {a.shape}")
    return np.clip(a, spec.action_low, spec.action_high)

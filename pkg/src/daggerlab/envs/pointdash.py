"""Damped point mass dashing down a corridor with a periodic lateral bump field.

Continuous 2-dim acceleration in [-1, 1]^2; progress is forward displacement
per step; episodes never "succeed" and end at the step cap. The scripted
expert is a PD controller tracking a target forward velocity while centering
laterally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .base import EnvSpec, StepResult, check_action

DAMP = 0.92
GAIN = 0.05
BUMP_AMP = 0.02
WAVELEN = 4.0
Y_HALF = 1.0
X_SCALE = 50.0
MAX_STEPS = 300

# oracle PD gains
TARGET_SPEED = 0.45
KP_SPEED = 4.0
KP_LATERAL = 3.0
KD_LATERAL = 8.0


@dataclass
class PointDashState:
    x: float
    y: float
    vx: float
    vy: float
    step_count: int
    done: bool


class PointDash:
    spec = EnvSpec(
        env_id="pointdash",
        observation_dim=6,
        action_kind="continuous",
        action_dim=2,
        action_low=-1.0,
        action_high=1.0,
        max_episode_steps=MAX_STEPS,
        frame_rate=30.0,
    )

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        state = PointDashState(
            x=0.0, y=float(rng.uniform(-0.1, 0.1)), vx=0.0, vy=0.0,
            step_count=0, done=False,
        )
        return state, self.observe(state)

    def observe(self, state) -> np.ndarray:
        phase = 2.0 * math.pi * state.x / WAVELEN
        return np.array([state.x / X_SCALE, state.y, state.vx, state.vy,
                         math.cos(phase), math.sin(phase)])

    def step(self, state, action):
        if state.done:
            raise RuntimeError("step after episode end")
        a = check_action(self.spec, action)
        phase = 2.0 * math.pi * state.x / WAVELEN
        bump = BUMP_AMP * math.sin(phase)
        vx = DAMP * state.vx + GAIN * float(a[0])
        vy = DAMP * state.vy + GAIN * float(a[1]) + bump
        x = state.x + vx
        y = state.y + vy
        if abs(y) > Y_HALF:  # corridor wall: clamp, kill lateral speed
            y = math.copysign(Y_HALF, y)
            vy = 0.0
        progress = x - state.x
        step_count = state.step_count + 1
        done = step_count >= MAX_STEPS
        new = PointDashState(x, y, vx, vy, step_count, done)
        return new, StepResult(self.observe(new), done, success=False, progress=progress)

    def pose_summary(self, state) -> dict:
        return {"pose": [state.x, state.y, state.vx, state.vy]}

    def oracle_action(self, state) -> np.ndarray:
        return _pd_action(state.y, state.vx, state.vy)

    def oracle_action_from_observation(self, obs) -> np.ndarray:
        return _pd_action(obs[1], obs[2], obs[3])

    def perturb(self, state, magnitude, seed):
        """Bounded jolt to lateral pose and both velocities."""
        if magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if magnitude == 0:
            return replace(state)
        rng = np.random.default_rng(seed)
        y = float(np.clip(state.y + 0.8 * magnitude * rng.uniform(-1, 1), -Y_HALF, Y_HALF))
        vx = state.vx + 0.5 * magnitude * rng.uniform(-1, 1)
        vy = state.vy + 0.5 * magnitude * rng.uniform(-1, 1)
        return PointDashState(state.x, y, vx, vy, state.step_count, state.done)


def _pd_action(y, vx, vy) -> np.ndarray:
    ax = KP_SPEED * (TARGET_SPEED - vx)
    ay = -KP_LATERAL * y - KD_LATERAL * vy
    return np.clip(np.array([ax, ay]), -1.0, 1.0)

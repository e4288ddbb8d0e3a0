"""Top-down kinematic race car on a narrow rectangular ring circuit.

Four discrete actions (forward, backward, left, right), seven raycast
sensors, wall contact zeroes speed without ending the episode, lap
completion counts as success. The corridor is barely wider than the car's
turning arc, so clean laps need a precise line; a stateless pure-pursuit
controller tracking the centerline acts as the scripted expert.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .base import EnvSpec, StepResult, check_action

# geometry: ring between two axis-aligned rectangles, centered at the origin
OUTER_X, OUTER_Y = 4.0, 3.0
INNER_X, INNER_Y = 3.0, 2.0
CAR_RADIUS = 0.15
RAY_MAX = 6.0
RAY_OFFSETS = np.array([-np.pi / 2, -np.pi / 3, -np.pi / 6, 0.0, np.pi / 6, np.pi / 3, np.pi / 2])

# centerline loop through (+-3.5, +-2.5), counterclockwise, start at (0, -2.5)
_CORNERS = [(0.0, -2.5), (3.5, -2.5), (3.5, 2.5), (-3.5, 2.5), (-3.5, -2.5), (0.0, -2.5)]
_SEGMENTS = []  # (ax, ay, dx, dy, length, start_s)
_s = 0.0
for _i in range(5):
    _ax, _ay = _CORNERS[_i]
    _bx, _by = _CORNERS[_i + 1]
    _L = math.hypot(_bx - _ax, _by - _ay)
    _SEGMENTS.append((_ax, _ay, _bx - _ax, _by - _ay, _L, _s))
    _s += _L
TRACK_LENGTH = _s

# car tuning
ACCEL = 0.06
TURN = 0.28
V_MIN = -0.06
V_MAX = 0.30
DRAG = 0.99
SPAWN_JITTER = 0.25
MAX_STEPS = 240

FORWARD, BACKWARD, LEFT, RIGHT = 0, 1, 2, 3

# oracle tuning
LOOKAHEAD = 0.8
TURN_DEADBAND = 0.18


def _wall_segments() -> np.ndarray:
    def rect(hx, hy):
        c = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
        return [(c[i], c[(i + 1) % 4]) for i in range(4)]

    segs = rect(OUTER_X, OUTER_Y) + rect(INNER_X, INNER_Y)
    return np.array([[p1[0], p1[1], p2[0], p2[1]] for p1, p2 in segs])


WALLS = _wall_segments()


def _ray_ring(ox, oy, dx, dy, outer_x, outer_y, inner_x, inner_y) -> float:
    """Exact ray distance to a rectangular ring via axis-aligned slab tests."""
    # exit through the outer rectangle
    if dx > 0.0:
        t_out = (outer_x - ox) / dx
    elif dx < 0.0:
        t_out = (-outer_x - ox) / dx
    else:
        t_out = math.inf
    if dy > 0.0:
        t = (outer_y - oy) / dy
    elif dy < 0.0:
        t = (-outer_y - oy) / dy
    else:
        t = math.inf
    if t < t_out:
        t_out = t
    # entry into the inner rectangle
    if dx != 0.0:
        tx1 = (-inner_x - ox) / dx
        tx2 = (inner_x - ox) / dx
        if tx1 > tx2:
            tx1, tx2 = tx2, tx1
    elif -inner_x <= ox <= inner_x:
        tx1, tx2 = -math.inf, math.inf
    else:
        tx1, tx2 = math.inf, -math.inf
    if dy != 0.0:
        ty1 = (-inner_y - oy) / dy
        ty2 = (inner_y - oy) / dy
        if ty1 > ty2:
            ty1, ty2 = ty2, ty1
    elif -inner_y <= oy <= inner_y:
        ty1, ty2 = -math.inf, math.inf
    else:
        ty1, ty2 = math.inf, -math.inf
    t_enter = tx1 if tx1 > ty1 else ty1
    t_exit = tx2 if tx2 < ty2 else ty2
    if 0.0 <= t_enter <= t_exit and t_enter < t_out:
        t_out = t_enter
    return t_out if t_out < RAY_MAX else RAY_MAX


def _ray_distance(ox, oy, dx, dy) -> float:
    """Sensor ray: exact distance to the walls, capped at RAY_MAX."""
    return _ray_ring(ox, oy, dx, dy, OUTER_X, OUTER_Y, INNER_X, INNER_Y)


def ray_distances(origin, angles) -> np.ndarray:
    """Nearest wall intersection distance per ray angle, capped at RAY_MAX."""
    ox, oy = float(origin[0]), float(origin[1])
    return np.array([_ray_distance(ox, oy, math.cos(a), math.sin(a)) for a in angles])


def position_valid(x, y) -> bool:
    """Car disc fully inside the ring."""
    if abs(x) > OUTER_X - CAR_RADIUS or abs(y) > OUTER_Y - CAR_RADIUS:
        return False
    if abs(x) < INNER_X + CAR_RADIUS and abs(y) < INNER_Y + CAR_RADIUS:
        return False
    return True


def arc_coordinate(x, y) -> float:
    """Arc length along the centerline loop of the nearest centerline point."""
    best_s, best_d = 0.0, math.inf
    for ax, ay, vx, vy, L, s0 in _SEGMENTS:
        tt = ((x - ax) * vx + (y - ay) * vy) / (L * L)
        if tt < 0.0:
            tt = 0.0
        elif tt > 1.0:
            tt = 1.0
        qx = ax + tt * vx - x
        qy = ay + tt * vy - y
        d = qx * qx + qy * qy
        if d < best_d:
            best_d = d
            best_s = s0 + tt * L
    return best_s % TRACK_LENGTH


def point_at_arc(s):
    s = s % TRACK_LENGTH
    for ax, ay, vx, vy, L, s0 in _SEGMENTS:
        if s <= s0 + L:
            tt = (s - s0) / L
            return (ax + tt * vx, ay + tt * vy)
    ax, ay, vx, vy, L, s0 = _SEGMENTS[-1]
    return (ax + vx, ay + vy)


def _wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _wrap_arc(ds):
    return (ds + TRACK_LENGTH / 2.0) % TRACK_LENGTH - TRACK_LENGTH / 2.0


@dataclass
class RaceTrackState:
    x: float
    y: float
    heading: float
    speed: float
    arc_prev: float
    lap_progress: float
    step_count: int
    done: bool


class RaceTrack:
    spec = EnvSpec(
        env_id="racetrack2d",
        observation_dim=13,
        action_kind="discrete",
        n_actions=4,
        max_episode_steps=MAX_STEPS,
        frame_rate=10.0,
    )

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        y = -2.5 + rng.uniform(-SPAWN_JITTER, SPAWN_JITTER)
        state = RaceTrackState(
            x=0.0, y=y, heading=0.0, speed=0.0,
            arc_prev=arc_coordinate(0.0, y), lap_progress=0.0,
            step_count=0, done=False,
        )
        return state, self.observe(state)

    def observe(self, state) -> np.ndarray:
        obs = np.empty(13)
        c = math.cos(state.heading)
        s = math.sin(state.heading)
        obs[0] = state.x
        obs[1] = state.y
        obs[2] = state.speed * c
        obs[3] = state.speed * s
        obs[4] = c
        obs[5] = s
        for i in range(7):
            a = state.heading + RAY_OFFSETS[i]
            obs[6 + i] = _ray_distance(state.x, state.y, math.cos(a), math.sin(a))
        return obs

    def step(self, state, action):
        if state.done:
            raise RuntimeError("step after episode end")
        a = check_action(self.spec, action)
        speed, heading = state.speed, state.heading
        if a == FORWARD:
            speed += ACCEL
        elif a == BACKWARD:
            speed -= ACCEL
        elif a == LEFT:
            heading = _wrap_angle(heading + TURN)
        else:
            heading = _wrap_angle(heading - TURN)
        speed *= DRAG
        if speed > V_MAX:
            speed = V_MAX
        elif speed < V_MIN:
            speed = V_MIN

        nx = state.x + speed * math.cos(heading)
        ny = state.y + speed * math.sin(heading)
        if position_valid(nx, ny):
            x, y = nx, ny
        else:
            x, y, speed = state.x, state.y, 0.0  # wall contact: stop, no teleport

        arc_now = arc_coordinate(x, y)
        lap_progress = state.lap_progress + _wrap_arc(arc_now - state.arc_prev)
        step_count = state.step_count + 1
        success = lap_progress >= TRACK_LENGTH
        done = success or step_count >= MAX_STEPS
        new = RaceTrackState(x, y, heading, speed, arc_now, lap_progress, step_count, done)
        return new, StepResult(self.observe(new), done, success)

    def oracle_action(self, state) -> int:
        return _pursuit_action(state.x, state.y, state.heading)

    def pose_summary(self, state) -> dict:
        return {"pose": [state.x, state.y, state.heading, state.speed]}

    def oracle_action_from_observation(self, obs) -> int:
        heading = math.atan2(obs[5], obs[4])
        return _pursuit_action(obs[0], obs[1], heading)

    def perturb(self, state, magnitude, seed):
        """Reverse the heading and jolt pose/speed; keeps the car inside the track."""
        if magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if magnitude == 0:
            return replace(state)
        rng = np.random.default_rng(seed)
        heading = _wrap_angle(state.heading + np.pi + 0.3 * magnitude * rng.uniform(-1, 1))
        x, y = state.x, state.y
        for _ in range(64):
            cx = state.x + 1.5 * magnitude * rng.uniform(-1, 1)
            cy = state.y + 1.5 * magnitude * rng.uniform(-1, 1)
            if position_valid(cx, cy):
                x, y = cx, cy
                break
        speed = float(np.clip(state.speed + 0.2 * magnitude * rng.uniform(-1, 1), V_MIN, V_MAX))
        return RaceTrackState(x, y, heading, speed, arc_coordinate(x, y),
                              state.lap_progress, state.step_count, state.done)


def _pursuit_action(x, y, heading) -> int:
    s = arc_coordinate(x, y)
    tx, ty = point_at_arc(s + LOOKAHEAD)
    bearing = _wrap_angle(math.atan2(ty - y, tx - x) - heading)
    if bearing > TURN_DEADBAND:
        return LEFT
    if bearing < -TURN_DEADBAND:
        return RIGHT
    return FORWARD

"""Goal-conditioned navigation on a fixed 11x11 walled grid.

Reset samples (start, goal) from the free cells; blocked moves are no-ops.
The scripted expert replans a breadth-first shortest path on every call, so
it gives correct actions from arbitrary handover states.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .base import EnvSpec, StepResult, check_action

LAYOUT = [
    "###########",
    "#.........#",
    "#.####.#..#",
    "#.#.......#",
    "#.#.#.#.###",
    "#.#.#.#...#",
    "#.#.#.#...#",
    "#.#.....#.#",
    "#.#.#####.#",
    "#.........#",
    "###########",
]
SIZE = 11
GRID = np.array([[1 if ch == "#" else 0 for ch in row] for row in LAYOUT])
FREE_CELLS = [(r, c) for r in range(SIZE) for c in range(SIZE) if GRID[r, c] == 0]

# actions move one cell: north, south, west, east
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
# raycast directions: N, NE, E, SE, S, SW, W, NW
RAY_DIRS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
MAX_STEPS = 60


def is_free(r, c) -> bool:
    return 0 <= r < SIZE and 0 <= c < SIZE and GRID[r, c] == 0


def ray_counts(r, c) -> np.ndarray:
    """Free cells traversable from (r, c) along each of the 8 directions."""
    out = np.zeros(len(RAY_DIRS))
    for i, (dr, dc) in enumerate(RAY_DIRS):
        n = 0
        rr, cc = r + dr, c + dc
        while is_free(rr, cc):
            n += 1
            rr, cc = rr + dr, cc + dc
        out[i] = n
    return out


def shortest_path(start, goal):
    """Deterministic BFS path from start to goal (inclusive), exploring N,S,W,E."""
    if start == goal:
        return [start]
    came = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for dr, dc in MOVES:
            nb = (cell[0] + dr, cell[1] + dc)
            if nb not in came and is_free(*nb):
                came[nb] = cell
                if nb == goal:
                    path = [nb]
                    while came[path[-1]] is not None:
                        path.append(came[path[-1]])
                    return path[::-1]
                queue.append(nb)
    raise RuntimeError(f"no path from {start} to {goal}")


@dataclass
class GridMazeState:
    agent: tuple[int, int]
    goal: tuple[int, int]
    step_count: int
    done: bool


class GridMaze:
    spec = EnvSpec(
        env_id="gridmaze",
        observation_dim=12,
        action_kind="discrete",
        n_actions=4,
        max_episode_steps=MAX_STEPS,
        frame_rate=10.0,
        goal_slice=(2, 4),
    )

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        start = FREE_CELLS[rng.integers(len(FREE_CELLS))]
        goal = start
        while goal == start:
            goal = FREE_CELLS[rng.integers(len(FREE_CELLS))]
        state = GridMazeState(agent=start, goal=goal, step_count=0, done=False)
        return state, self.observe(state)

    def observe(self, state) -> np.ndarray:
        r, c = state.agent
        return np.concatenate([
            [float(r), float(c), float(state.goal[0]), float(state.goal[1])],
            ray_counts(r, c),
        ])

    def step(self, state, action):
        if state.done:
            raise RuntimeError("step after episode end")
        a = check_action(self.spec, action)
        dr, dc = MOVES[a]
        nr, nc = state.agent[0] + dr, state.agent[1] + dc
        agent = (nr, nc) if is_free(nr, nc) else state.agent
        step_count = state.step_count + 1
        success = agent == state.goal
        done = success or step_count >= MAX_STEPS
        new = GridMazeState(agent, state.goal, step_count, done)
        return new, StepResult(self.observe(new), done, success)

    def pose_summary(self, state) -> dict:
        return {"pose": [state.agent[0], state.agent[1]],
                "goal": [state.goal[0], state.goal[1]]}

    def oracle_action(self, state) -> int:
        path = shortest_path(state.agent, state.goal)
        if len(path) < 2:
            return 0
        dr = path[1][0] - path[0][0]
        dc = path[1][1] - path[0][1]
        return MOVES.index((dr, dc))

    def oracle_action_from_observation(self, obs) -> int:
        agent = (int(round(obs[0])), int(round(obs[1])))
        goal = (int(round(obs[2])), int(round(obs[3])))
        return self.oracle_action(GridMazeState(agent, goal, 0, False))

    def perturb(self, state, magnitude, seed):
        """Teleport to a seeded free cell off the current shortest path."""
        if magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if magnitude == 0:
            return replace(state)
        rng = np.random.default_rng(seed)
        on_path = set(shortest_path(state.agent, state.goal))
        radius = max(2, int(round(3 * magnitude)))
        candidates = [
            cell for cell in FREE_CELLS
            if cell not in on_path and cell != state.goal
            and max(abs(cell[0] - state.agent[0]), abs(cell[1] - state.agent[1])) <= radius
        ]
        if not candidates:
            candidates = [cell for cell in FREE_CELLS if cell != state.agent and cell != state.goal]
        agent = candidates[rng.integers(len(candidates))]
        return GridMazeState(agent, state.goal, state.step_count, state.done)

"""Delimited on-disk records: per-iteration metrics, trajectory dumps, summaries.

Float fields are written with repr (shortest round-trip form) so repeated
runs with the same seed produce byte-identical files.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

METRICS_COLUMNS = [
    "method", "env", "seed", "iteration", "dataset_size", "task_performance",
    "nswitch", "expert_frames", "monitoring_frames", "expert_minutes",
]


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class IterationRow:
    method: str
    env: str
    seed: int
    iteration: int
    dataset_size: int
    task_performance: float
    nswitch: int | None = None
    expert_frames: int = 0
    monitoring_frames: int | None = None
    expert_minutes: float = 0.0
    collection_steps: int = 0  # cumulative env steps while collecting; not in the CSV


@dataclass
class SessionMetrics:
    rows: list[IterationRow] = field(default_factory=list)

    @property
    def final(self) -> IterationRow:
        return self.rows[-1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_COLUMNS)
            for r in self.rows:
                writer.writerow([
                    r.method, r.env, r.seed, r.iteration, r.dataset_size,
                    fmt(r.task_performance), fmt(r.nswitch), r.expert_frames,
                    fmt(r.monitoring_frames), fmt(r.expert_minutes),
                ])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TraceRecorder:
    """Per-step trajectory dump: one row per environment step."""

    def __init__(self, run_id: str, env_spec):
        self.run_id = run_id
        self.spec = env_spec
        self.rows: list[list] = []

    def record(self, episode, t, observation, action, controller,
               measure=None, threshold=None, dwell=None) -> None:
        obs = [repr(float(v)) for v in np.asarray(observation).ravel()]
        if self.spec.action_kind == "discrete":
            act = [str(int(action))]
        else:
            act = [repr(float(v)) for v in np.asarray(action).ravel()]
        self.rows.append(
            [self.run_id, episode, t] + obs + act
            + [controller, fmt(measure), fmt(threshold), fmt(dwell)]
        )

    def header(self) -> list[str]:
        obs_cols = [f"obs_{i}" for i in range(self.spec.observation_dim)]
        if self.spec.action_kind == "discrete":
            act_cols = ["action"]
        else:
            act_cols = [f"act_{i}" for i in range(self.spec.action_dim)]
        return ["run_id", "episode", "t"] + obs_cols + act_cols + [
            "controller", "measure", "threshold", "dwell"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            writer.writerows(self.rows)


def read_trace_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def recount_switches(trace_rows) -> int:
    """Post-hoc novice->expert handover count from a trajectory dump."""
    n = 0
    prev_controller = "novice"
    prev_episode = None
    for row in trace_rows:
        episode = row["episode"]
        if episode != prev_episode:
            prev_controller = "novice"
            prev_episode = episode
        if row["controller"] == "expert" and prev_controller == "novice":
            n += 1
        prev_controller = row["controller"]
    return n


def write_summary_csv(path, metrics_list: list[SessionMetrics]) -> None:
    """Per-method mean and std over seeds of the final-iteration metrics."""
    groups: dict[tuple[str, str], list[IterationRow]] = {}
    for m in metrics_list:
        r = m.final
        groups.setdefault((r.method, r.env), []).append(r)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "method", "env", "n_seeds",
            "task_performance_mean", "task_performance_std",
            "nswitch_mean", "nswitch_std",
            "dataset_size_mean", "expert_frames_mean", "expert_minutes_mean",
        ])
        for (method, env), rows in sorted(groups.items()):
            perf = np.array([r.task_performance for r in rows], dtype=np.float64)
            switches = [r.nswitch for r in rows if r.nswitch is not None]
            writer.writerow([
                method, env, len(rows),
                fmt(perf.mean()), fmt(perf.std()),
                fmt(float(np.mean(switches)) if switches else None),
                fmt(float(np.std(switches)) if switches else None),
                fmt(float(np.mean([r.dataset_size for r in rows]))),
                fmt(float(np.mean([r.expert_frames for r in rows]))),
                fmt(float(np.mean([r.expert_minutes for r in rows]))),
            ])

"""Report rendering: matplotlib figures written next to the delimited output.

Consumes the metrics and trajectory CSV files produced by runs and sweeps;
produces learning-curve and expert-burden figures plus a top-down trace map
with novice segments in blue and expert interventions in red.
"""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .envs import env_geometry
from .records import read_metrics_csv, read_trace_csv

METHOD_COLORS = {
    "bc": "tab:gray", "dagger": "tab:purple", "lazy": "tab:green",
    "ensemble": "tab:orange", "rnd": "tab:blue", "hg": "tab:red",
}


def _group_rows(metrics_files):
    """rows keyed by method, each a list of per-run iteration sequences."""
    by_method = defaultdict(list)
    for path in metrics_files:
        rows = read_metrics_csv(path)
        runs = defaultdict(list)
        for r in rows:
            runs[(r["method"], r["seed"])].append(r)
        for (method, _seed), seq in runs.items():
            by_method[method].append(seq)
    return by_method


def performance_curves(metrics_files, out_png) -> Path:
    """Task performance against dataset size, mean over seeds per method."""
    by_method = _group_rows(metrics_files)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method, runs in sorted(by_method.items()):
        # align runs on iteration index; x is the mean dataset size
        n = max(len(seq) for seq in runs)
        xs, ys = [], []
        for i in range(n):
            pts = [(float(s[i]["dataset_size"]), float(s[i]["task_performance"]))
                   for s in runs if len(s) > i]
            xs.append(np.mean([p[0] for p in pts]))
            ys.append(np.mean([p[1] for p in pts]))
        ax.plot(xs, ys, marker="o", ms=3,
                color=METHOD_COLORS.get(method), label=method)
    ax.set_xlabel("dataset size")
    ax.set_ylabel("task performance")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return Path(out_png)


def switch_curves(metrics_files, out_png) -> Path:
    """Cumulative context switches against dataset size per method."""
    by_method = _group_rows(metrics_files)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method, runs in sorted(by_method.items()):
        if any(not s[0]["nswitch"] for s in runs):
            continue  # methods without a switch count
        n = max(len(seq) for seq in runs)
        xs, ys = [], []
        for i in range(n):
            pts = [(float(s[i]["dataset_size"]), float(s[i]["nswitch"]))
                   for s in runs if len(s) > i]
            xs.append(np.mean([p[0] for p in pts]))
            ys.append(np.mean([p[1] for p in pts]))
        ax.plot(xs, ys, marker="o", ms=3,
                color=METHOD_COLORS.get(method), label=method)
    ax.set_xlabel("dataset size")
    ax.set_ylabel("context switches")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return Path(out_png)


def trace_map(trace_file, env_id, out_png) -> Path:
    """Top-down trajectory map: novice segments blue, expert segments red."""
    rows = read_trace_csv(trace_file)
    geo = env_geometry(env_id)
    fig, ax = plt.subplots(figsize=(5, 4))
    if geo["kind"] == "track":
        for x1, y1, x2, y2 in geo["walls"]:
            ax.plot([x1, x2], [y1, y2], color="black", lw=1.5)
        get_xy = lambda r: (float(r["obs_0"]), float(r["obs_1"]))
    elif geo["kind"] == "grid":
        cells = np.array(geo["cells"])
        ax.imshow(cells, cmap="Greys", origin="upper", alpha=0.7)
        get_xy = lambda r: (float(r["obs_1"]), float(r["obs_0"]))  # col, row
    else:
        ax.axhline(geo["y_half"], color="black", lw=1.5)
        ax.axhline(-geo["y_half"], color="black", lw=1.5)
        get_xy = lambda r: (float(r["obs_0"]) * 50.0, float(r["obs_1"]))
    prev = None
    prev_ep = None
    for r in rows:
        xy = get_xy(r)
        if prev is not None and r["episode"] == prev_ep:
            color = "tab:red" if r["controller"] == "expert" else "tab:blue"
            ax.plot([prev[0], xy[0]], [prev[1], xy[1]], color=color, lw=0.8, alpha=0.6)
        prev, prev_ep = xy, r["episode"]
    ax.set_aspect("equal")
    ax.set_title(f"{env_id}: novice (blue) / expert (red)", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return Path(out_png)


def render_report(run_dirs, out_dir) -> list[Path]:
    """Figures + aggregated summary.csv for one or more run directories."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_files = []
    for d in run_dirs:
        d = Path(d)
        if (d / "metrics.csv").exists():
            metrics_files.append(d / "metrics.csv")
        metrics_files.extend(sorted(d.glob("*/metrics.csv")))
    if not metrics_files:
        raise FileNotFoundError(f"no metrics.csv under {[str(d) for d in run_dirs]}")
    written = [
        performance_curves(metrics_files, out_dir / "task_performance.png"),
        switch_curves(metrics_files, out_dir / "context_switches.png"),
    ]
    from .records import SessionMetrics, IterationRow, write_summary_csv

    sessions = []
    for path in metrics_files:
        rows = read_metrics_csv(path)
        runs = defaultdict(list)
        for r in rows:
            runs[(r["method"], r["seed"])].append(r)
        for seq in runs.values():
            last = seq[-1]
            sessions.append(SessionMetrics([IterationRow(
                method=last["method"], env=last["env"], seed=int(last["seed"]),
                iteration=int(last["iteration"]), dataset_size=int(last["dataset_size"]),
                task_performance=float(last["task_performance"]),
                nswitch=int(last["nswitch"]) if last["nswitch"] else None,
                expert_frames=int(last["expert_frames"]),
                monitoring_frames=int(last["monitoring_frames"]) if last["monitoring_frames"] else None,
                expert_minutes=float(last["expert_minutes"]),
            )]))
    summary = out_dir / "summary.csv"
    write_summary_csv(summary, sessions)
    written.append(summary)
    # best-effort trace maps for runs that dumped trajectories
    for d in run_dirs:
        d = Path(d)
        for trace in sorted(d.glob("**/trajectories.csv"))[:4]:
            meta = trace.parent / "metrics.csv"
            if not meta.exists():
                continue
            env_id = read_metrics_csv(meta)[0]["env"]
            name = f"trace_{trace.parent.name}.png"
            written.append(trace_map(trace, env_id, out_dir / name))
    return written

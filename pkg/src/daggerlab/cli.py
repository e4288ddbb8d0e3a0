"""Command-line entry points: run, sweep, eval, export-traces, serve, replay, report."""
from __future__ import annotations

import argparse
import csv
import multiprocessing
import os
import sys
from pathlib import Path

from . import policy as pol
from .config import load_config, load_sweep, serialize_config
from .envs import make_env
from .orchestrator import (LivenessError, config_to_dict, derive_seed,
                           evaluate, run_method)
from .records import SessionMetrics, TraceRecorder


def _out_root() -> Path:
    return Path(os.environ.get("DAGGERLAB_OUT", "daggerlab_out"))


def _run_once(config, out_dir: Path) -> SessionMetrics:
    out_dir.mkdir(parents=True, exist_ok=True)
    env = make_env(config.env)
    run_id = f"{config.method}-{config.env}-seed{config.seed}"
    trace = TraceRecorder(run_id, env.spec)
    trained, metrics = run_method(config, trace=trace)
    metrics.write_csv(out_dir / "metrics.csv")
    trace.write_csv(out_dir / "trajectories.csv")
    with open(out_dir / "config.toml", "w") as fh:
        fh.write(serialize_config(config))
    eval_meta = {
        "env": config.env,
        "eval_episodes": config.eval_episodes,
        "eval_seed": derive_seed(config.seed, "eval"),
        "task_performance": metrics.final.task_performance,
        "goal_conditioned": config.goal_conditioned,
    }
    members = trained if isinstance(trained, list) else [trained]
    for k, member in enumerate(members):
        name = "policy.npz" if len(members) == 1 else f"policy_member{k}.npz"
        pol.save_policy(out_dir / name, member, extra=eval_meta)
    return metrics


def cmd_run(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.max_steps_guard is not None:
        overrides["max_steps_guard"] = args.max_steps_guard
    config = load_config(args.config, overrides)
    out_dir = Path(args.out) if args.out else _out_root() / (
        f"{Path(args.config).stem}-seed{config.seed}")
    metrics = _run_once(config, out_dir)
    row = metrics.final
    print(f"{config.method} on {config.env} seed {config.seed}: "
          f"task_performance={row.task_performance} dataset={row.dataset_size} "
          f"nswitch={row.nswitch} expert_frames={row.expert_frames} -> {out_dir}")
    return 0


def _point_dir_name(point: dict) -> str:
    parts = [f"{k}={point[k]}" for k in sorted(point) if k != "seed"]
    parts.append(f"seed{point['seed']}")
    return "_".join(parts).replace("/", "-")


def _sweep_worker(job):
    index, config_dict, out_dir = job
    from .orchestrator import config_from_dict

    config = config_from_dict(config_dict)
    try:
        metrics = _run_once(config, Path(out_dir))
        row = metrics.final
        return (index, {
            "status": "ok", "method": row.method, "env": row.env, "seed": row.seed,
            "dataset_size": row.dataset_size, "task_performance": row.task_performance,
            "nswitch": row.nswitch if row.nswitch is not None else "",
            "expert_frames": row.expert_frames, "expert_minutes": row.expert_minutes,
            "error": "",
        })
    except LivenessError as exc:
        return (index, {"status": "failed", "method": config.method, "env": config.env,
                        "seed": config.seed, "dataset_size": "", "task_performance": "",
                        "nswitch": "", "expert_frames": "", "expert_minutes": "",
                        "error": str(exc)})


def cmd_sweep(args) -> int:
    spec = load_sweep(args.config)
    out_dir = Path(args.out) if args.out else _out_root() / f"{Path(args.config).stem}-sweep"
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    points = spec.points()
    for i, point in enumerate(points):
        cfg = config_to_dict(spec.base)
        cfg.update(point)
        jobs.append((i, cfg, str(out_dir / _point_dir_name(point))))
    if args.workers > 1:
        with multiprocessing.Pool(args.workers) as pool:
            results = pool.map(_sweep_worker, jobs)
    else:
        results = [_sweep_worker(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    axis_names = sorted(spec.axes)
    with open(out_dir / "sweep_metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(axis_names + ["seed", "status", "method", "env", "dataset_size",
                                      "task_performance", "nswitch", "expert_frames",
                                      "expert_minutes", "error"])
        for (i, row), point in zip(results, points):
            writer.writerow([point[a] for a in axis_names] + [
                point["seed"], row["status"], row["method"], row["env"],
                row["dataset_size"], row["task_performance"], row["nswitch"],
                row["expert_frames"], row["expert_minutes"], row["error"]])
    n_failed = sum(1 for _, r in results if r["status"] != "ok")
    print(f"sweep complete: {len(results)} runs, {n_failed} failed -> {out_dir}")
    return 0 if n_failed == 0 else 1


def cmd_eval(args) -> int:
    from . import nncore

    members = [pol.load_policy(p) for p in args.checkpoint]
    _, meta = nncore.load_params(args.checkpoint[0])
    env_id = args.env or (meta or {}).get("env")
    if env_id is None:
        print("eval: no --env given and the checkpoint carries none", file=sys.stderr)
        return 2
    env = make_env(env_id)
    episodes = args.episodes or int(meta.get("eval_episodes", 100))
    seed = args.seed if args.seed is not None else int(meta.get("eval_seed", 0))
    score = evaluate(members if len(members) > 1 else members[0], env, episodes, seed)
    print(f"task_performance={score!r}")
    if "task_performance" in (meta or {}) and args.episodes is None and args.seed is None:
        recorded = float(meta["task_performance"])
        match = "identical to" if score == recorded else f"differs from recorded {recorded!r}"
        print(f"checkpoint record: {match}")
    return 0


def cmd_export_traces(args) -> int:
    from .bridge import export_traces

    out = Path(args.out) if args.out else Path(args.record).with_suffix(".csv")
    export_traces(args.record, out)
    print(f"wrote {out}")
    return 0


def cmd_serve(args) -> int:
    from .bridge import SessionServer

    config = load_config(args.config, {"seed": args.seed} if args.seed is not None else None)
    record_path = Path(args.out) if args.out else _out_root() / "session.jsonl"
    record_path.parent.mkdir(parents=True, exist_ok=True)
    server = SessionServer(config, host=args.host, port=args.port,
                           tick_hz=args.tick_hz, record_path=record_path)
    print(f"serving {config.method} on {config.env}: ws://{args.host}:{server.port}/")
    server.serve_once()
    print(f"session recorded -> {record_path}")
    return 0


def cmd_replay(args) -> int:
    from .bridge import replay_session

    out_dir = Path(args.out) if args.out else None
    metrics = replay_session(args.record, out_dir=out_dir)
    row = metrics.final
    print(f"replayed {row.method} on {row.env}: task_performance={row.task_performance} "
          f"dataset={row.dataset_size} expert_frames={row.expert_frames}")
    return 0


def cmd_report(args) -> int:
    from .report import render_report

    out_dir = Path(args.out) if args.out else Path(args.runs[0]) / "report"
    written = render_report(args.runs, out_dir)
    for p in written:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="daggerlab",
                                description="active imitation learning testbed")
    sub = p.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="execute one configured run")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--max-steps-guard", type=int, dest="max_steps_guard")
    run.set_defaults(fn=cmd_run)

    sweep = sub.add_parser("sweep", help="enumerate a hyperparameter sweep")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.set_defaults(fn=cmd_sweep)

    ev = sub.add_parser("eval", help="score a saved policy checkpoint")
    ev.add_argument("--checkpoint", nargs="+", required=True)
    ev.add_argument("--env")
    ev.add_argument("--episodes", type=int)
    ev.add_argument("--seed", type=int)
    ev.set_defaults(fn=cmd_eval)

    ex = sub.add_parser("export-traces", help="convert a session record to a trajectory dump")
    ex.add_argument("--record", required=True)
    ex.add_argument("--out")
    ex.set_defaults(fn=cmd_export_traces)

    sv = sub.add_parser("serve", help="serve a live expert session")
    sv.add_argument("--config", required=True)
    sv.add_argument("--seed", type=int)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8765)
    sv.add_argument("--tick-hz", type=float, default=10.0, dest="tick_hz")
    sv.add_argument("--out")
    sv.set_defaults(fn=cmd_serve)

    rp = sub.add_parser("replay", help="re-drive a recorded session deterministically")
    rp.add_argument("--record", required=True)
    rp.add_argument("--out")
    rp.set_defaults(fn=cmd_replay)

    rep = sub.add_parser("report", help="render figures and a summary from run outputs")
    rep.add_argument("--runs", nargs="+", required=True)
    rep.add_argument("--out")
    rep.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"daggerlab {args.cmd}: {exc}", file=sys.stderr)
        return 2
    except LivenessError as exc:
        print(f"daggerlab {args.cmd}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

import csv
import os
from pathlib import Path

import pytest

from daggerlab.cli import main
from daggerlab.config import (SweepSpec, load_config, load_sweep, preset_names,
                              serialize_config)
from daggerlab.orchestrator import RunConfig, config_to_dict
from daggerlab.records import read_metrics_csv


SMALL_RUN = """\
env = "racetrack2d"
method = "rnd"
iterations = 1
samples_per_iteration = 40
seed_episodes = 2
eval_episodes = 10
bc_epochs = 10
rnd_epochs = 10
context_length = 2
met_window = 3
rnd_threshold_factor = 1.0
"""


def write_config(tmp_path, text=SMALL_RUN, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# config parsing


def test_roundtrip_parse_serialize_parse(tmp_path):
    path = write_config(tmp_path)
    cfg = load_config(path)
    echoed = tmp_path / "echo.toml"
    echoed.write_text(serialize_config(cfg))
    assert load_config(echoed) == cfg


def test_unknown_keys_rejected(tmp_path):
    path = write_config(tmp_path, SMALL_RUN + 'florb = 3\n')
    with pytest.raises(ValueError, match="florb"):
        load_config(path)


def test_extends_resolves_presets(tmp_path):
    path = write_config(tmp_path, 'extends = "rc_rnd"\nseed = 9\n')
    cfg = load_config(path)
    assert cfg.method == "rnd"
    assert cfg.seed == 9
    assert cfg.met_window == 30


def test_extends_local_file(tmp_path):
    write_config(tmp_path, SMALL_RUN, name="base.toml")
    child = write_config(tmp_path, 'extends = "base.toml"\nseed = 4\n', name="child.toml")
    cfg = load_config(child)
    assert cfg.seed == 4 and cfg.samples_per_iteration == 40


def test_missing_config_errors():
    with pytest.raises(FileNotFoundError):
        load_config("nonexistent_thing.toml")


def test_preset_values_match_published_selections():
    names = preset_names()
    for env_tag in ("rc", "hc", "maze"):
        for method in ("bc", "dagger", "lazy", "ensemble", "rnd", "hg"):
            assert f"{env_tag}_{method}" in names
    rc_rnd = load_config("rc_rnd")
    assert (rc_rnd.rnd_threshold_factor, rc_rnd.context_length, rc_rnd.met_window,
            rc_rnd.rnd_hidden, rc_rnd.rnd_layers) == (2.0, 10, 30, 32, 0)
    hc_lazy = load_config("hc_lazy")
    assert (hc_lazy.enter_factor, hc_lazy.exit_divider) == (0.0, 1.5)
    maze_ens = load_config("maze_ensemble")
    assert (maze_ens.doubt_factor, maze_ens.discrepancy_factor,
            maze_ens.ensemble_size) == (0.5, 3.0, 3)
    hc_rnd = load_config("hc_rnd")
    assert (hc_rnd.rnd_hidden, hc_rnd.rnd_layers, hc_rnd.context_length,
            hc_rnd.met_window) == (128, 2, 0, 5)
    for env_tag, beta0 in (("rc", 0.5), ("hc", 0.7), ("maze", 0.8)):
        assert load_config(f"{env_tag}_dagger").dagger_beta0 == beta0


# ---------------------------------------------------------------------------
# sweeps


def test_sweep_points_enumeration_deterministic():
    spec = SweepSpec(base=RunConfig(method="rnd"), axes={"met_window": [0, 30]},
                     seeds=[0, 1, 2])
    pts = spec.points()
    assert len(pts) == 6
    assert pts[0] == {"met_window": 0, "seed": 0}
    assert pts[-1] == {"met_window": 30, "seed": 2}
    assert spec.points() == pts


def test_load_sweep_rejects_unknown_axis(tmp_path):
    path = write_config(tmp_path, SMALL_RUN + '\n[sweep]\n[sweep.axes]\nflorb = [1, 2]\n')
    with pytest.raises(ValueError, match="florb"):
        load_sweep(path)


# ---------------------------------------------------------------------------
# CLI


def test_cli_run_deterministic_outputs(tmp_path):
    cfg = write_config(tmp_path)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", "--config", str(cfg), "--seed", "7", "--out", str(out1)]) == 0
    assert main(["run", "--config", str(cfg), "--seed", "7", "--out", str(out2)]) == 0
    for name in ("metrics.csv", "trajectories.csv", "config.toml"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_cli_run_bad_config_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL_RUN + 'mystery_knob = true\n')
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "mystery_knob" in err and str(cfg) in err


def test_cli_eval_reproduces_recorded_performance(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    main(["run", "--config", str(cfg), "--seed", "3", "--out", str(out)])
    recorded = read_metrics_csv(out / "metrics.csv")[-1]["task_performance"]
    assert main(["eval", "--checkpoint", str(out / "policy.npz")]) == 0
    printed = capsys.readouterr().out
    assert f"task_performance={recorded}" in printed
    assert "identical to" in printed


def test_cli_sweep_complete_rows(tmp_path):
    text = SMALL_RUN + "\n[sweep]\nseeds = [0, 1]\n[sweep.axes]\nmet_window = [0, 3]\n"
    cfg = write_config(tmp_path, text, name="sweep.toml")
    out = tmp_path / "sweepout"
    code = main(["sweep", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    with open(out / "sweep_metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert {(r["met_window"], r["seed"]) for r in rows} == \
        {("0", "0"), ("0", "1"), ("3", "0"), ("3", "1")}
    assert all(r["status"] == "ok" for r in rows)
    # every point produced its own run directory with metrics
    assert len(list(out.glob("*/metrics.csv"))) == 4


def test_cli_sweep_records_failures(tmp_path):
    # liveness-starved config: condition never true
    text = SMALL_RUN.replace('method = "rnd"', 'method = "lazy"') + \
        "enter_factor = 1e9\nexit_divider = 1.0\nmax_steps_guard = 200\n" + \
        "\n[sweep]\nseeds = [0]\n[sweep.axes]\nmet_window = [0]\n"
    cfg = write_config(tmp_path, text, name="sweep.toml")
    out = tmp_path / "sweepout"
    code = main(["sweep", "--config", str(cfg), "--out", str(out)])
    assert code == 1
    with open(out / "sweep_metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["status"] == "failed"
    assert "starving" in rows[0]["error"]


def test_cli_sweep_dwell_axis_reduces_switches(tmp_path):
    text = (SMALL_RUN
            .replace("samples_per_iteration = 40", "samples_per_iteration = 150")
            .replace("iterations = 1", "iterations = 2")
            + "\n[sweep]\nseeds = [0]\n[sweep.axes]\nmet_window = [0, 20]\n")
    cfg = write_config(tmp_path, text, name="dwell.toml")
    out = tmp_path / "dwell_out"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    with open(out / "sweep_metrics.csv") as fh:
        rows = {r["met_window"]: r for r in csv.DictReader(fh)}
    assert int(rows["20"]["nswitch"]) < int(rows["0"]["nswitch"])


def test_cli_sweep_workers_equivalent(tmp_path):
    text = SMALL_RUN + "\n[sweep]\nseeds = [0, 1]\n[sweep.axes]\nmet_window = [3]\n"
    cfg = write_config(tmp_path, text, name="sweep.toml")
    seq, par = tmp_path / "seq", tmp_path / "par"
    main(["sweep", "--config", str(cfg), "--out", str(seq)])
    main(["sweep", "--config", str(cfg), "--out", str(par), "--workers", "2"])
    assert (seq / "sweep_metrics.csv").read_bytes() == (par / "sweep_metrics.csv").read_bytes()


def test_cli_report_renders_figures(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    main(["run", "--config", str(cfg), "--seed", "2", "--out", str(out)])
    report_dir = tmp_path / "report"
    assert main(["report", "--runs", str(out), "--out", str(report_dir)]) == 0
    assert (report_dir / "task_performance.png").stat().st_size > 0
    assert (report_dir / "context_switches.png").stat().st_size > 0
    assert (report_dir / "summary.csv").exists()
    assert list(report_dir.glob("trace_*.png"))


def test_cli_out_root_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("DAGGERLAB_OUT", str(tmp_path / "rootout"))
    cfg = write_config(tmp_path)
    assert main(["run", "--config", str(cfg), "--seed", "1"]) == 0
    assert (tmp_path / "rootout" / "run-seed1" / "metrics.csv").exists()

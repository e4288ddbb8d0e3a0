"""Run configuration files: flat TOML with an `extends` key for presets.

Unknown keys are rejected rather than silently defaulted, and
parse -> serialize -> parse is the identity on the resolved mapping.
"""
from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .orchestrator import RunConfig, config_from_dict, config_to_dict

_PRESET_PACKAGE = "daggerlab.presets"


def preset_names() -> list[str]:
    root = importlib.resources.files(_PRESET_PACKAGE)
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _read_toml(source: str | Path) -> dict:
    path = Path(source)
    if path.exists():
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    name = str(source).removesuffix(".toml")
    resource = importlib.resources.files(_PRESET_PACKAGE) / f"{name}.toml"
    if resource.is_file():
        return tomllib.loads(resource.read_text())
    raise FileNotFoundError(f"no config file or preset named {source!r}")


def _resolve(source, _depth=0) -> dict:
    if _depth > 8:
        raise ValueError("extends chain too deep (cycle?)")
    data = _read_toml(source)
    parent_name = data.pop("extends", None)
    if parent_name is None:
        return data
    base = Path(source).parent if Path(source).exists() else Path(".")
    parent_source = base / parent_name if (base / parent_name).exists() else parent_name
    parent = _resolve(parent_source, _depth + 1)
    merged = dict(parent)
    merged.update(data)
    return merged


def load_config(source: str | Path, overrides: dict | None = None) -> RunConfig:
    """Resolve a config file or preset name (with extends) into a RunConfig."""
    data = _resolve(source)
    data.pop("sweep", None)
    if overrides:
        data.update(overrides)
    try:
        return config_from_dict(data)
    except (ValueError, TypeError) as exc:
        raise ValueError(f"{source}: {exc}") from exc


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(config: RunConfig) -> str:
    data = config_to_dict(config)
    lines = [f"{k} = {_format_value(data[k])}" for k in sorted(data)]
    return "\n".join(lines) + "\n"


@dataclass
class SweepSpec:
    """Cross product of named hyperparameter axes and seeds over a base config."""

    base: RunConfig
    axes: dict[str, list] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: list(range(8)))

    def points(self) -> list[dict]:
        """Deterministic enumeration: axes sorted by name, seeds innermost."""
        names = sorted(self.axes)
        combos = [{}]
        for name in names:
            combos = [{**c, name: v} for c in combos for v in self.axes[name]]
        out = []
        for combo in combos:
            for seed in self.seeds:
                out.append({**combo, "seed": seed})
        return out


def load_sweep(source: str | Path) -> SweepSpec:
    data = _resolve(source)
    sweep = data.pop("sweep", None)
    if sweep is None:
        raise ValueError(f"{source}: missing [sweep] table")
    axes = dict(sweep.get("axes", {}))
    seeds = [int(s) for s in sweep.get("seeds", range(8))]
    known = {f.name for f in fields(RunConfig)}
    for axis in axes:
        if axis not in known:
            raise ValueError(f"{source}: unknown sweep axis {axis!r}")
    base = config_from_dict(data)
    return SweepSpec(base=base, axes=axes, seeds=seeds)

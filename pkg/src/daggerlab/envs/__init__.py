"""Deterministic desk-scale environments with scripted oracle experts."""
from __future__ import annotations

from .base import EnvSpec, StepResult, check_action
from .gridmaze import GridMaze
from .pointdash import PointDash
from .racetrack import RaceTrack

ENV_IDS = ("racetrack2d", "gridmaze", "pointdash")

_CLASSES = {
    "racetrack2d": RaceTrack,
    "gridmaze": GridMaze,
    "pointdash": PointDash,
}


def make_env(env_id: str):
    if env_id not in _CLASSES:
        raise ValueError(f"unknown env {env_id!r}; choose from {ENV_IDS}")
    return _CLASSES[env_id]()


def env_geometry(env_id: str) -> dict:
    """Static geometry summary for rendering: wall segments plus scene bounds."""
    from . import gridmaze, racetrack

    if env_id == "racetrack2d":
        return {
            "kind": "track",
            "walls": racetrack.WALLS.tolist(),
            "bounds": [-racetrack.OUTER_X, -racetrack.OUTER_Y,
                       racetrack.OUTER_X, racetrack.OUTER_Y],
        }
    if env_id == "gridmaze":
        return {
            "kind": "grid",
            "cells": [[int(v) for v in row] for row in gridmaze.GRID],
            "bounds": [0, 0, gridmaze.SIZE, gridmaze.SIZE],
        }
    if env_id == "pointdash":
        from . import pointdash

        return {
            "kind": "corridor",
            "y_half": pointdash.Y_HALF,
            "wavelength": pointdash.WAVELEN,
            "bounds": [0, -pointdash.Y_HALF, pointdash.X_SCALE, pointdash.Y_HALF],
        }
    raise ValueError(f"unknown env {env_id!r}")


__all__ = [
    "EnvSpec", "StepResult", "check_action", "make_env", "env_geometry",
    "ENV_IDS", "RaceTrack", "GridMaze", "PointDash",
]

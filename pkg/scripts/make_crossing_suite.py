#!/usr/bin/env python3
"""Generate the bundled crossing suite: five episodes in a walled arena
with pedestrian streams cutting across the robot's straight route.

Writes maps, ETH-style track files (2.5 Hz annotations), and episode
manifests under data/crossing_suite/. Deterministic by construction, so
the checked-in data can always be regenerated byte-identically.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from replaynav.core import EnvironmentMap
from replaynav.ingest import save_environment

FRAME_RATE = 2.5  # annotation rate of the source datasets
ARENA_M = 14.0
RES = 0.1

ROBOT_START = {"x": 2.0, "y": 7.0, "heading": 0.0}
ROBOT_GOAL = {"x": 12.0, "y": 7.0, "radius": 0.3}


def walker(ped_id, x0, y0, vx, vy, t0, t1):
    """Constant-velocity track sampled at the annotation rate."""
    rows = []
    f0 = round(t0 * FRAME_RATE)
    f1 = round(t1 * FRAME_RATE)
    for frame in range(f0, f1 + 1):
        t = frame / FRAME_RATE
        rows.append((frame, ped_id, x0 + vx * (t - t0), y0 + vy * (t - t0)))
    return rows


def stream(first_id, count, x, y_start, vy, spacing_s, t0, duration,
           jitter_x=0.0):
    """A lane of pedestrians crossing vertically, one every spacing_s."""
    rows = []
    for k in range(count):
        start = t0 + k * spacing_s
        x_k = x + (jitter_x if k % 2 else -jitter_x)
        rows += walker(first_id + k, x_k, y_start, 0.0, vy, start,
                       start + duration)
    return rows


def episode_doc(name):
    return {
        "name": name,
        "environment": "../maps/arena",
        "start": dict(ROBOT_START),
        "goal": dict(ROBOT_GOAL),
        "time_budget": 60.0,
        "tick_rate": 25.0,
        "pedestrian_radius": 0.30,
        "pedestrians": [
            {"track_file": f"../tracks/{name}.txt", "frame_rate": FRAME_RATE},
        ],
    }


def build(out_root: Path):
    maps_dir = out_root / "maps"
    tracks_dir = out_root / "tracks"
    episodes_dir = out_root / "episodes"
    for d in (maps_dir, tracks_dir, episodes_dir):
        d.mkdir(parents=True, exist_ok=True)

    n = round(ARENA_M / RES)
    grid = np.ones((n, n), dtype=bool)
    grid[0, :] = grid[-1, :] = grid[:, 0] = grid[:, -1] = False
    save_environment(EnvironmentMap(grid, RES, name="arena"),
                     maps_dir / "arena.pgm")

    suites = {}

    def eta(x_c: float) -> float:
        """Nominal time the robot reaches column x_c driving straight."""
        return (x_c - ROBOT_START["x"]) / 1.2

    def column(first_id, x_c, count, vy, headway, lead=2.4, y_cross=7.0):
        """Vertical lane whose middle pedestrian crosses the route right
        when the robot arrives; `lead` controls how early the first
        pedestrian crosses."""
        t_mid = eta(x_c)
        rows = []
        for k in range(count):
            cross_at = t_mid + (k - (count - 1) / 2) * headway
            t0 = max(0.0, cross_at - lead)
            y0 = y_cross - vy * (cross_at - t0)
            rows += walker(first_id + k, x_c, y0, 0.0, vy, t0, t0 + 2 * lead)
        return rows

    # 1. Small groups crossing at successive columns along the route.
    suites["cross_single"] = (
        column(1, 4.5, 2, -1.0, 0.9)
        + column(11, 6.5, 2, -1.0, 0.9)
        + column(21, 8.5, 2, -1.0, 0.9))

    # 2. Opposing lanes: southbound at x = 5, northbound at x = 8.5.
    suites["cross_double"] = (
        column(1, 5.0, 3, -1.0, 0.8)
        + column(11, 8.5, 3, 1.0, 0.8))

    # 3. Diagonal flow cutting the route at 45 degrees.
    rows = []
    for k in range(6):
        cross_at = eta(6.0) + (k - 2.5) * 0.85
        speed = 0.75
        lead = 2.8
        t0 = max(0.0, cross_at - lead)
        back = cross_at - t0
        rows += walker(1 + k, 6.0 + speed * back, 7.0 + speed * back,
                       -speed, -speed, t0, t0 + 2 * lead + 1.0)
    suites["cross_diagonal"] = rows

    # 4. Dense block: three tight columns, barely threadable.
    suites["cross_dense"] = (
        column(1, 6.1, 4, -1.1, 0.65, lead=2.4)
        + column(11, 6.8, 4, -1.1, 0.65, lead=2.1)
        + column(21, 7.5, 4, -1.1, 0.65, lead=2.6))

    # 5. Bidirectional flows plus a late group near the goal.
    suites["cross_bidir"] = (
        column(1, 4.2, 3, -0.9, 0.85)
        + column(11, 7.0, 3, 1.0, 0.85)
        + column(21, 9.8, 3, 1.2, 0.8))

    for name, rows in suites.items():
        rows.sort(key=lambda r: (r[0], r[1]))
        lines = [f"{f} {pid} {x:.4f} {y:.4f}" for f, pid, x, y in rows]
        (tracks_dir / f"{name}.txt").write_text("\n".join(lines) + "\n")
        (episodes_dir / f"{name}.json").write_text(
            json.dumps(episode_doc(name), indent=2, sort_keys=True) + "\n")

    print(f"crossing suite -> {out_root} ({len(suites)} episodes)")


if __name__ == "__main__":
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parents[1] / "data" / "crossing_suite"
    build(root)

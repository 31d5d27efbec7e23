"""Schematic top-down frame rendering from simulator states.

Frames are rasterized with pure numpy (no anti-aliasing), so identical
inputs give byte-identical images. Agents are discs at true radii, the
goal is a ring, and the robot heading is a contrasting spoke.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .core import AgentState, EnvironmentMap
from .engine import EpisodeLog, SimState

DEFAULT_COLORS = {
    "free": (255, 255, 255),
    "obstacle": (40, 40, 40),
    "robot": (50, 90, 220),
    "heading": (250, 250, 90),
    "pedestrian": (230, 120, 40),
    "goal": (40, 170, 70),
    "trail": (150, 190, 250),
}


@dataclass(frozen=True)
class FrameSpec:
    pixels_per_meter: float = 20.0
    colors: dict = field(default_factory=lambda: dict(DEFAULT_COLORS))
    trail_length: int = 100
    goal_ring_px: int = 2

    def __post_init__(self):
        if self.pixels_per_meter <= 0:
            raise ValueError("pixels per meter must be positive")


def _disc_mask(shape, cx, cy, radius_px):
    ys, xs = np.ogrid[:shape[0], :shape[1]]
    return (xs - cx) ** 2 + (ys - cy) ** 2 <= radius_px ** 2


def render_frame(state: SimState, env: EnvironmentMap, spec: FrameSpec,
                 goal: Optional[tuple[float, float]] = None,
                 goal_radius: float = 0.3,
                 trail: Sequence[tuple[float, float]] = ()) -> np.ndarray:
    """Rasterize one tick as an (H, W, 3) uint8 image of the whole map.

    World y grows upward, image rows grow downward; the camera covers the
    full environment. States outside the map bounds are rejected.
    """
    ppm = spec.pixels_per_meter
    h_cells, w_cells = env.shape
    width = max(1, round(w_cells * env.resolution * ppm))
    height = max(1, round(h_cells * env.resolution * ppm))
    colors = spec.colors

    rx, ry = state.robot.pose.x, state.robot.pose.y
    x0, y0 = env.origin
    if not (x0 <= rx <= x0 + w_cells * env.resolution
            and y0 <= ry <= y0 + h_cells * env.resolution):
        raise ValueError("robot outside the rendered window")

    def to_px(x, y):
        return ((x - x0) * ppm, height - (y - y0) * ppm)

    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = colors["free"]

    # Obstacles: upscale the grid to pixel resolution.
    ys = np.minimum((np.arange(height)[::-1] / ppm / env.resolution).astype(int),
                    h_cells - 1)
    xs = np.minimum((np.arange(width) / ppm / env.resolution).astype(int),
                    w_cells - 1)
    blocked = ~env.traversable[np.ix_(ys, xs)]
    img[blocked] = colors["obstacle"]

    for (tx, ty) in list(trail)[-spec.trail_length:]:
        px, py = to_px(tx, ty)
        ix, iy = int(px), int(py)
        if 0 <= ix < width and 0 <= iy < height:
            img[iy, ix] = colors["trail"]

    if goal is not None:
        gx, gy = to_px(goal[0], goal[1])
        ring = goal_radius * ppm
        ys_, xs_ = np.ogrid[:height, :width]
        dist = np.sqrt((xs_ - gx) ** 2 + (ys_ - gy) ** 2)
        img[np.abs(dist - ring) <= spec.goal_ring_px] = colors["goal"]

    for ped in state.pedestrians:
        px, py = to_px(ped.pose.x, ped.pose.y)
        img[_disc_mask(img.shape, px, py, ped.radius * ppm)] = colors["pedestrian"]

    px, py = to_px(rx, ry)
    r_px = state.robot.radius * ppm
    img[_disc_mask(img.shape, px, py, r_px)] = colors["robot"]
    # Heading spoke from the center to the rim.
    steps = max(2, int(r_px) * 2)
    for i in range(steps + 1):
        f = i / steps
        hx = int(px + f * r_px * math.cos(state.robot.pose.heading))
        hy = int(py - f * r_px * math.sin(state.robot.pose.heading))
        if 0 <= hx < width and 0 <= hy < height:
            img[hy, hx] = colors["heading"]
    return img


def render_episode_frames(log: EpisodeLog, env: EnvironmentMap,
                          spec: FrameSpec, out_dir: str | Path,
                          stride: int = 1) -> list[Path]:
    """Write `frames/%06d.png` for every logged tick (or every
    ``stride``-th)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    trail: list[tuple[float, float]] = []
    for record in log.records:
        trail.append((record.robot.pose.x, record.robot.pose.y))
        if record.tick % stride:
            continue
        state = SimState(t=record.t, tick=record.tick, robot=record.robot,
                         pedestrians=record.pedestrians)
        img = render_frame(state, env, spec, goal=log.goal,
                           goal_radius=log.goal_radius, trail=trail[:-1])
        path = out_dir / f"{record.tick:06d}.png"
        Image.fromarray(img).save(path)
        written.append(path)
    return written

"""Force-based steering: goal attraction with exponential repulsion from
pedestrians and static obstacles (circular-specification variant).

Emits holonomic velocity commands; there is no angular-rate constraint in
this formulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import AgentState


@dataclass(frozen=True)
class SocialForcesParams:
    relaxation_time: float = 0.5   # tau, s
    desired_speed: float = 1.2     # v0, m/s
    ped_strength: float = 5.0      # A, m/s^2
    ped_range: float = 0.3         # B, m
    obstacle_strength: float = 10.0
    obstacle_range: float = 0.2

    def __post_init__(self):
        if min(self.relaxation_time, self.ped_strength, self.ped_range) <= 0:
            raise ValueError("tau, A, B must all be positive")


def social_forces_step(robot: AgentState, pedestrians: Sequence[AgentState],
                       obstacle_points: Sequence[tuple[float, float]],
                       waypoint: tuple[float, float],
                       params: SocialForcesParams, dt: float,
                       v_max: float = 1.2) -> tuple[float, float]:
    """One steering step; returns the velocity vector to command.

    acceleration = (v0 * goal_dir - v) / tau
                 + sum_peds A * exp((r_sum - d) / B) * away_dir
                 + sum_obstacles A_o * exp((r_robot - d) / B_o) * away_dir
    The integrated velocity is clamped to v_max.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    pos = np.array([robot.pose.x, robot.pose.y])
    vel = np.array(robot.velocity)

    to_goal = np.array(waypoint) - pos
    goal_dist = float(np.linalg.norm(to_goal))
    if goal_dist > 1e-12:
        desired = params.desired_speed * to_goal / goal_dist
    else:
        desired = np.zeros(2)
    accel = (desired - vel) / params.relaxation_time

    for ped in pedestrians:
        away = pos - np.array([ped.pose.x, ped.pose.y])
        d = float(np.linalg.norm(away))
        if d < 1e-12:
            continue
        r_sum = robot.radius + ped.radius
        magnitude = params.ped_strength * math.exp((r_sum - d) / params.ped_range)
        accel += magnitude * away / d

    for ob in obstacle_points:
        away = pos - np.array(ob, dtype=float)
        d = float(np.linalg.norm(away))
        if d < 1e-12:
            continue
        magnitude = params.obstacle_strength * math.exp(
            (robot.radius - d) / params.obstacle_range)
        accel += magnitude * away / d

    new_vel = vel + accel * dt
    speed = float(np.linalg.norm(new_vel))
    if speed > v_max:
        new_vel *= v_max / speed
    return float(new_vel[0]), float(new_vel[1])


class ObstacleIndex:
    """Nearest occupied-cell lookup for obstacle repulsion."""

    def __init__(self, env, query_range: float = 2.0):
        from scipy.spatial import cKDTree

        cells = env.occupied_cells()
        self.range = query_range
        if len(cells) == 0:
            self._tree = None
            return
        centers = np.array([env.cell_center(int(ix), int(iy))
                            for ix, iy in cells])
        self._tree = cKDTree(centers)
        self._centers = centers

    def nearest(self, x: float, y: float) -> Optional[tuple[float, float]]:
        if self._tree is None:
            return None
        dist, idx = self._tree.query([x, y])
        if dist > self.range:
            return None
        return tuple(self._centers[idx])

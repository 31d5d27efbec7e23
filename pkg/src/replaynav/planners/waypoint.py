"""Sampling meta-planner: subgoals on a connectivity graph.

Plans over the 8-connected grid at map resolution, inflated by the robot
radius via a distance transform. Candidate trajectories are the Dijkstra
paths from the robot cell; each is scored by accumulated length plus a
clearance penalty plus remaining straight-line distance to goal, and the
subgoal is the endpoint of the cheapest candidate within the time
horizon. Straight segments are shortcut: with a free line of sight the
subgoal lies exactly on the robot-goal ray.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..core import EnvironmentMap, Pose2D

SQRT2 = math.sqrt(2.0)

_NEIGHBORS = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
              (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2)]


@dataclass(frozen=True)
class WaypointParams:
    horizon_s: float = 6.0
    replan_radius: float = 1.0      # request a new subgoal inside this
    clearance_pref: float = 0.5     # start penalizing below this clearance
    clearance_weight: float = 2.0


class WaypointPlanner:
    """Per-environment planner; caches the clearance field."""

    def __init__(self, env: EnvironmentMap, robot_radius: float,
                 v_max: float, params: WaypointParams | None = None):
        self.env = env
        self.robot_radius = robot_radius
        self.v_max = v_max
        self.params = params or WaypointParams()
        res = env.resolution
        # Distance (m) from each cell center to the nearest obstacle cell.
        self.clearance = ndimage.distance_transform_edt(
            env.traversable, sampling=res)
        self.free = self.clearance > robot_radius

    @property
    def reach(self) -> float:
        return self.v_max * self.params.horizon_s

    def _cell(self, x: float, y: float) -> tuple[int, int]:
        return self.env.cell_of(x, y)

    def _line_of_sight(self, a: tuple[float, float],
                       b: tuple[float, float]) -> bool:
        dist = math.hypot(b[0] - a[0], b[1] - a[1])
        steps = max(2, int(dist / (self.env.resolution * 0.5)) + 1)
        for i in range(steps + 1):
            f = i / steps
            x = a[0] + f * (b[0] - a[0])
            y = a[1] + f * (b[1] - a[1])
            ix, iy = self._cell(x, y)
            if not self.env.in_bounds(ix, iy) or not self.free[iy, ix]:
                return False
        return True

    def waypoint(self, pose: Pose2D, goal: tuple[float, float]) -> Pose2D:
        """Subgoal for the current pose: at most v_max * horizon away,
        or the goal itself when that is reachable within the horizon."""
        start = (pose.x, pose.y)
        target = (float(goal[0]), float(goal[1]))
        goal_dist = math.hypot(target[0] - start[0], target[1] - start[1])

        if self._line_of_sight(start, target):
            if goal_dist <= self.reach:
                return Pose2D(target[0], target[1], pose.heading)
            f = self.reach / goal_dist
            wx = start[0] + f * (target[0] - start[0])
            wy = start[1] + f * (target[1] - start[1])
            return Pose2D(wx, wy, math.atan2(wy - start[1], wx - start[0]))

        cell = self._cell(*start)
        if not self.env.in_bounds(*cell) or not self.free[cell[1], cell[0]]:
            return pose  # surrounded: keep station

        best = self._walk_field(cell, target)
        if best is None:
            return pose
        wx, wy = best
        return Pose2D(wx, wy, math.atan2(wy - start[1], wx - start[0]))

    def _goal_field(self, target: tuple[float, float]) -> np.ndarray | None:
        """Penalty-weighted cost-to-goal over the inflated grid, cached
        per goal (one field per episode in practice)."""
        if getattr(self, "_field_goal", None) == target:
            return self._field
        env = self.env
        res = env.resolution
        h, w = self.free.shape
        pref = self.params.clearance_pref
        weight = self.params.clearance_weight

        seeds = []
        gx, gy = self._cell(*target)
        if env.in_bounds(gx, gy) and self.free[gy, gx]:
            seeds.append((gx, gy))
        else:
            free_cells = np.argwhere(self.free)  # (iy, ix)
            if len(free_cells) == 0:
                self._field_goal, self._field = target, None
                return None
            centers = (free_cells[:, ::-1] + 0.5) * res + env.origin
            nearest = int(np.argmin(
                np.hypot(centers[:, 0] - target[0], centers[:, 1] - target[1])))
            seeds.append((int(free_cells[nearest][1]), int(free_cells[nearest][0])))

        INF = float("inf")
        cost = np.full((h, w), INF)
        heap = []
        for sx, sy in seeds:
            cost[sy, sx] = 0.0
            heap.append((0.0, sx, sy))
        heapq.heapify(heap)
        while heap:
            c, ix, iy = heapq.heappop(heap)
            if c > cost[iy, ix]:
                continue
            for dx, dy, step in _NEIGHBORS:
                nx, ny = ix + dx, iy + dy
                if not (0 <= nx < w and 0 <= ny < h) or not self.free[ny, nx]:
                    continue
                clear = self.clearance[ny, nx]
                penalty = max(0.0, (pref - clear) / pref) * weight
                new_cost = c + step * res * (1.0 + penalty)
                if new_cost < cost[ny, nx]:
                    cost[ny, nx] = new_cost
                    heapq.heappush(heap, (new_cost, nx, ny))
        self._field_goal, self._field = target, cost
        return cost

    def _walk_field(self, start_cell: tuple[int, int],
                    target: tuple[float, float]):
        """Follow the cheapest path toward the goal, stopping at the
        horizon; returns the endpoint world position."""
        cost = self._goal_field(target)
        if cost is None or not np.isfinite(cost[start_cell[1], start_cell[0]]):
            return None
        env = self.env
        res = env.resolution
        h, w = self.free.shape
        goal_cell = self._cell(*target)
        walked = 0.0
        cur = start_cell
        while walked < self.reach:
            if cur == goal_cell:
                return target
            ix, iy = cur
            best_next = None
            best_total = cost[iy, ix]
            for dx, dy, step in _NEIGHBORS:
                nx, ny = ix + dx, iy + dy
                if not (0 <= nx < w and 0 <= ny < h) or not self.free[ny, nx]:
                    continue
                if cost[ny, nx] < best_total:
                    best_total = cost[ny, nx]
                    best_next = (nx, ny, step * res)
            if best_next is None:
                break  # at the field minimum (the goal seed)
            cur = (best_next[0], best_next[1])
            walked += best_next[2]
        return env.cell_center(*cur)

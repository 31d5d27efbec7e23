"""Reciprocal-velocity-obstacle avoidance with one-sided responsibility.

The robot treats every replayed pedestrian as a constant-velocity agent
that will not cooperate (its responsibility share is 0), so the robot
takes the full avoidance maneuver (share 1). Each pedestrian induces one
half-plane of permitted velocities; the commanded velocity is the point
of the half-plane intersection, capped to the speed disc, closest to the
preferred velocity. When the intersection is empty the solver falls back
to the velocity minimizing the largest violation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ..core import AgentState

EPS = 1e-10


@dataclass(frozen=True)
class HalfPlane:
    """Permitted velocities satisfy (v - point) . normal >= 0."""

    point: tuple[float, float]
    normal: tuple[float, float]

    def __post_init__(self):
        n = math.hypot(*self.normal)
        if not math.isclose(n, 1.0, abs_tol=1e-9):
            raise ValueError(f"normal must be unit length, got |n|={n}")

    def violation(self, v: tuple[float, float]) -> float:
        """Positive when v lies on the forbidden side."""
        return -((v[0] - self.point[0]) * self.normal[0]
                 + (v[1] - self.point[1]) * self.normal[1])

    def permits(self, v: tuple[float, float], tol: float = 0.0) -> bool:
        return self.violation(v) <= tol


@dataclass(frozen=True)
class OrcaParams:
    time_horizon: float = 2.0
    neighbor_range: float = 10.0
    robot_responsibility: float = 1.0
    ped_responsibility: float = 0.0

    def __post_init__(self):
        if self.time_horizon <= 0:
            raise ValueError("time horizon must be positive")
        for share in (self.robot_responsibility, self.ped_responsibility):
            if not 0.0 <= share <= 1.0:
                raise ValueError("responsibility shares must be in [0, 1]")


def orca_halfplane(robot: AgentState, pedestrian: AgentState,
                   time_horizon: float, responsibility: float,
                   dt: float = 0.04) -> HalfPlane:
    """Half-plane of robot velocities avoiding one pedestrian.

    Builds the velocity obstacle over ``time_horizon`` (a cone truncated
    by the disc of radius R/tau at p_rel/tau), takes u as the shortest
    vector from the current relative velocity to the VO boundary, and
    places the boundary at v_robot + responsibility * u with the outward
    normal of the boundary at that point. Agents already overlapping get
    a plane that resolves the penetration within one tick.
    """
    px = pedestrian.pose.x - robot.pose.x
    py = pedestrian.pose.y - robot.pose.y
    vx = robot.velocity[0] - pedestrian.velocity[0]
    vy = robot.velocity[1] - pedestrian.velocity[1]
    r = robot.radius + pedestrian.radius
    dist_sq = px * px + py * py
    r_sq = r * r
    if dist_sq == 0.0:
        raise ValueError("agents fully coincident; no separating direction")

    if dist_sq > r_sq:
        inv_tau = 1.0 / time_horizon
        # w: from the truncation-disc center to the relative velocity.
        wx = vx - inv_tau * px
        wy = vy - inv_tau * py
        w_len_sq = wx * wx + wy * wy
        dot1 = wx * px + wy * py
        if dot1 < 0.0 and dot1 * dot1 > r_sq * w_len_sq:
            # Closest to the cutoff disc.
            w_len = math.sqrt(w_len_sq)
            ux, uy = wx / w_len, wy / w_len
            u_scale = r * inv_tau - w_len
            normal = (ux, uy)
            u = (u_scale * ux, u_scale * uy)
        else:
            # Closest to one of the cone legs.
            leg = math.sqrt(dist_sq - r_sq)
            if px * wy - py * wx > 0.0:
                direction = ((px * leg - py * r) / dist_sq,
                             (px * r + py * leg) / dist_sq)
            else:
                direction = (-(px * leg + py * r) / dist_sq,
                             -(-px * r + py * leg) / dist_sq)
            dot2 = vx * direction[0] + vy * direction[1]
            u = (dot2 * direction[0] - vx, dot2 * direction[1] - vy)
            normal = (-direction[1], direction[0])
    else:
        # Already overlapping: push the relative velocity out of the disc
        # of radius R/dt centered at p_rel/dt (resolves within one tick).
        inv_dt = 1.0 / dt
        wx = vx - inv_dt * px
        wy = vy - inv_dt * py
        w_len = math.hypot(wx, wy)
        if w_len < EPS:
            # Symmetric degenerate case: push back along the center line.
            d = math.sqrt(dist_sq)
            nx, ny = -px / d, -py / d
            u_scale = r * inv_dt
            normal = (nx, ny)
            u = (u_scale * nx, u_scale * ny)
        else:
            ux, uy = wx / w_len, wy / w_len
            u_scale = r * inv_dt - w_len
            normal = (ux, uy)
            u = (u_scale * ux, u_scale * uy)

    point = (robot.velocity[0] + responsibility * u[0],
             robot.velocity[1] + responsibility * u[1])
    return HalfPlane(point=point, normal=normal)


# ---------------------------------------------------------------------------
# 2D linear program over half-planes within a speed disc.
#
# Incremental construction: planes are processed in order; whenever the
# current optimum violates plane i, the new optimum lies on the boundary
# line of plane i, found by a 1D clamp against all earlier planes. If the
# system is infeasible the fallback program minimizes the maximum signed
# violation instead (the planes are relaxed in lockstep).


def _line_of(plane: HalfPlane) -> tuple[tuple[float, float], tuple[float, float]]:
    # Boundary line with the permitted side on the left of `direction`.
    nx, ny = plane.normal
    return plane.point, (ny, -nx)


def _det(a: tuple[float, float], b: tuple[float, float]) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _solve_on_line(lines, index: int, radius: float, opt, direction_opt: bool,
                   ) -> Optional[tuple[float, float]]:
    point, direction = lines[index]
    dot = point[0] * direction[0] + point[1] * direction[1]
    disc = dot * dot + radius * radius - (point[0] ** 2 + point[1] ** 2)
    if disc < 0.0:
        return None  # the speed disc misses this boundary line entirely
    sqrt_disc = math.sqrt(disc)
    t_left = -dot - sqrt_disc
    t_right = -dot + sqrt_disc

    for prev_point, prev_dir in lines[:index]:
        denom = _det(direction, prev_dir)
        numer = _det(prev_dir, (point[0] - prev_point[0], point[1] - prev_point[1]))
        if abs(denom) <= EPS:
            if numer < 0.0:
                return None  # parallel and fully excluded
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    if direction_opt:
        if opt[0] * direction[0] + opt[1] * direction[1] > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = (direction[0] * (opt[0] - point[0])
             + direction[1] * (opt[1] - point[1]))
        t = max(t_left, min(t_right, t))
    return (point[0] + t * direction[0], point[1] + t * direction[1])


def _solve_lp2(lines, radius: float, opt, direction_opt: bool,
               ) -> tuple[int, tuple[float, float]]:
    if direction_opt:
        result = (opt[0] * radius, opt[1] * radius)
    elif opt[0] ** 2 + opt[1] ** 2 > radius * radius:
        scale = radius / math.hypot(*opt)
        result = (opt[0] * scale, opt[1] * scale)
    else:
        result = (opt[0], opt[1])

    for i, (point, direction) in enumerate(lines):
        if _det(direction, (point[0] - result[0], point[1] - result[1])) > 0.0:
            candidate = _solve_on_line(lines, i, radius, opt, direction_opt)
            if candidate is None:
                return i, result
            result = candidate
    return len(lines), result


def _solve_lp3(lines, begin: int, radius: float,
               result: tuple[float, float]) -> tuple[float, float]:
    distance = 0.0
    for i in range(begin, len(lines)):
        point_i, dir_i = lines[i]
        if _det(dir_i, (point_i[0] - result[0], point_i[1] - result[1])) <= distance:
            continue
        projected = []
        for point_j, dir_j in lines[:i]:
            denom = _det(dir_i, dir_j)
            if abs(denom) <= EPS:
                if dir_i[0] * dir_j[0] + dir_i[1] * dir_j[1] > 0.0:
                    continue  # same direction: j dominated by i
                new_point = ((point_i[0] + point_j[0]) / 2.0,
                             (point_i[1] + point_j[1]) / 2.0)
            else:
                t = _det(dir_j, (point_i[0] - point_j[0],
                                 point_i[1] - point_j[1])) / denom
                new_point = (point_i[0] + t * dir_i[0],
                             point_i[1] + t * dir_i[1])
            dx = dir_j[0] - dir_i[0]
            dy = dir_j[1] - dir_i[1]
            norm = math.hypot(dx, dy)
            projected.append((new_point, (dx / norm, dy / norm)))
        fail_at, candidate = _solve_lp2(
            projected, radius, (-dir_i[1], dir_i[0]), True)
        if fail_at >= len(projected):
            result = candidate
        distance = _det(dir_i, (point_i[0] - result[0], point_i[1] - result[1]))
    return result


def solve_velocity_lp(halfplanes: Sequence[HalfPlane],
                      preferred: tuple[float, float],
                      v_max: float) -> tuple[float, float]:
    """Velocity in the half-plane intersection (within the speed disc)
    closest to the preferred velocity; least-violating fallback when the
    intersection is empty."""
    if v_max <= 0:
        raise ValueError(f"v_max must be positive, got {v_max}")
    lines = [_line_of(p) for p in halfplanes]
    fail_at, result = _solve_lp2(lines, v_max, tuple(preferred), False)
    if fail_at < len(lines):
        result = _solve_lp3(lines, fail_at, v_max, result)
    return result


def orca_step(robot: AgentState, pedestrians: Sequence[AgentState],
              preferred: tuple[float, float], params: OrcaParams,
              v_max: float, dt: float) -> tuple[float, float]:
    """One planning step: build half-planes for nearby pedestrians and
    solve for the velocity to command."""
    planes = []
    for ped in pedestrians:
        gap = math.hypot(ped.pose.x - robot.pose.x, ped.pose.y - robot.pose.y)
        if gap > params.neighbor_range:
            continue
        planes.append(orca_halfplane(
            robot, ped, params.time_horizon, params.robot_responsibility, dt))
    return solve_velocity_lp(planes, preferred, v_max)

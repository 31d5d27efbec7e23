"""Navigation metrics: path quality, motion quality, pedestrian disruption,
and cross-episode meta statistics.

All per-episode metrics are recomputed from EpisodeLogs, never from live
simulator state, so results are replayable offline and identical whether
computed during or after a run. Robot speeds derive from logged positions
(not commands), which keeps clamping and control-mode effects honest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import AgentState, Pose2D, bearing_error
from .engine import EpisodeLog, Termination, TerminationKind

CPD_SATURATION_M = 10.0
TTC_SATURATION_S = 10.0


def path_length(positions: Sequence) -> float:
    """Total distance traversed: sum of consecutive segment lengths."""
    pts = np.asarray(positions, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("need at least one position")
    if len(pts) == 1:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def path_length_ratio(start, end, length: float) -> float:
    """Straight-line displacement over distance traversed.

    1.0 for a straight drive, smaller for detours, 0.0 when the robot
    returns to its start. In (0, 1] whenever the path ends at the goal.
    """
    if length <= 0:
        raise ValueError(f"path length must be positive, got {length}")
    disp = math.hypot(end[0] - start[0], end[1] - start[1])
    return disp / length


def goal_traversal_ratio(start, end, goal) -> float:
    """Remaining goal distance relative to the starting goal distance.

    Only meaningful for incomplete episodes; lower is better, above 1
    means the robot ended farther from the goal than it started.
    """
    d0 = math.hypot(goal[0] - start[0], goal[1] - start[1])
    if d0 == 0:
        raise ValueError("start coincides with goal")
    d1 = math.hypot(goal[0] - end[0], goal[1] - end[1])
    return d1 / d0


def path_irregularity(poses: Sequence[Pose2D], goal,
                      goal_radius: float = 0.0) -> float:
    """Mean absolute angle between heading and the goal direction.

    Poses within ``goal_radius`` of the goal are excluded (the goal
    direction is ill-defined there); zero for a straight drive at the
    goal.
    """
    gx, gy = float(goal[0]), float(goal[1])
    errors = [bearing_error(p, (gx, gy)) for p in poses
              if math.hypot(gx - p.x, gy - p.y) > goal_radius]
    if not errors:
        raise ValueError("all poses inside the goal region")
    return float(np.mean(errors))


def kinematic_stats(positions: Sequence, dt: float,
                    ) -> tuple[float, float, float, float]:
    """(average speed, energy, average |accel|, average |jerk|) from a
    position series.

    Velocities are first differences; energy integrates squared speed
    over time assuming unit mass (no 1/2 factor); acceleration and jerk
    are mean magnitudes of successive vector finite differences.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    pts = np.asarray(positions, dtype=float)
    if len(pts) < 4:
        raise ValueError("need at least 4 positions for jerk")
    vel = np.diff(pts, axis=0) / dt
    speed = np.linalg.norm(vel, axis=1)
    acc = np.diff(vel, axis=0) / dt
    jerk = np.diff(acc, axis=0) / dt
    avg_speed = float(np.mean(speed))
    energy = float(np.sum(speed ** 2) * dt)
    avg_acc = float(np.mean(np.linalg.norm(acc, axis=1)))
    avg_jerk = float(np.mean(np.linalg.norm(jerk, axis=1)))
    return avg_speed, energy, avg_acc, avg_jerk


def closest_pedestrian_distance(robot: AgentState,
                                pedestrians: Iterable[AgentState]) -> float:
    """Surface-to-surface distance to the nearest pedestrian.

    Negative while overlapping; saturated above at 10 m, which is also
    the value when no pedestrian is present.
    """
    best = CPD_SATURATION_M
    for ped in pedestrians:
        d = math.hypot(ped.pose.x - robot.pose.x, ped.pose.y - robot.pose.y)
        best = min(best, d - robot.radius - ped.radius)
    return min(best, CPD_SATURATION_M)


def time_to_collision(robot: AgentState,
                      pedestrians: Iterable[AgentState]) -> float:
    """Minimum constant-velocity extrapolated collision time, in seconds.

    For each pedestrian, solves the smallest t >= 0 with
    |p_rel + v_rel t| = r_robot + r_ped; pairs already overlapping give
    0, diverging pairs give infinity. Saturated above at 10 s.
    """
    best = math.inf
    for ped in pedestrians:
        t = _pair_ttc(
            ped.pose.x - robot.pose.x, ped.pose.y - robot.pose.y,
            ped.velocity[0] - robot.velocity[0],
            ped.velocity[1] - robot.velocity[1],
            robot.radius + ped.radius)
        best = min(best, t)
    return min(best, TTC_SATURATION_S)


def _pair_ttc(px: float, py: float, vx: float, vy: float, r: float) -> float:
    c = px * px + py * py - r * r
    if c <= 0:
        return 0.0
    a = vx * vx + vy * vy
    b = 2.0 * (px * vx + py * vy)
    if a == 0.0:
        return math.inf
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return math.inf
    sqrt_disc = math.sqrt(disc)
    t0 = (-b - sqrt_disc) / (2.0 * a)
    t1 = (-b + sqrt_disc) / (2.0 * a)
    if t0 >= 0:
        return t0
    if t1 >= 0:
        # Started at the boundary moving inward numerically; treat as now.
        return 0.0
    return math.inf


def _kinematics_lenient(positions: np.ndarray, dt: float,
                        ) -> tuple[float, float, float, float]:
    """kinematic_stats, degrading to zeros on logs too short for the
    higher derivatives (e.g. an immediate environment collision)."""
    if len(positions) >= 4:
        return kinematic_stats(positions, dt)
    if len(positions) < 2:
        return 0.0, 0.0, 0.0, 0.0
    vel = np.diff(positions, axis=0) / dt
    speed = np.linalg.norm(vel, axis=1)
    avg_speed = float(np.mean(speed))
    energy = float(np.sum(speed ** 2) * dt)
    avg_acc = 0.0
    if len(positions) >= 3:
        acc = np.diff(vel, axis=0) / dt
        avg_acc = float(np.mean(np.linalg.norm(acc, axis=1)))
    return avg_speed, energy, avg_acc, 0.0


@dataclass
class EpisodeMetrics:
    """Per-episode scores across path, motion, and pedestrian axes."""

    episode: str
    termination: Termination
    transport_failure: bool
    path_length_m: float
    path_length_ratio: float
    goal_traversal_ratio: Optional[float]  # incomplete episodes only
    path_irregularity_rad: float
    traversal_time_s: float
    avg_speed_mps: float
    energy_j: float
    avg_acceleration_mps2: float
    avg_jerk_mps3: float
    cpd_series_m: list[float] = field(default_factory=list)
    ttc_series_s: list[float] = field(default_factory=list)
    mean_cpd_m: float = CPD_SATURATION_M
    mean_ttc_s: float = TTC_SATURATION_S
    pedestrian_collisions: int = 0
    avg_wait_s: float = 0.0

    def to_doc(self) -> dict:
        doc = dict(self.__dict__)
        doc["termination"] = {
            "kind": self.termination.kind.value,
            "success": self.termination.success,
            "pedestrian_collisions": self.termination.pedestrian_collisions,
        }
        return doc


def compute_episode_metrics(log: EpisodeLog) -> EpisodeMetrics:
    if log.termination is None:
        raise ValueError(f"log for {log.episode_name} has no termination")
    records = log.records
    positions = log.positions()
    dt = log.dt
    start = positions[0]
    end = positions[-1]
    length = path_length(positions)
    avg_speed, energy, avg_acc, avg_jerk = _kinematics_lenient(positions, dt)

    incomplete = log.termination.kind is not TerminationKind.COMPLETION
    gtr = goal_traversal_ratio(start, end, log.goal) if incomplete else None

    poses = [r.robot.pose for r in records]
    gx, gy = log.goal
    if all(math.hypot(gx - p.x, gy - p.y) <= log.goal_radius for p in poses):
        irregularity = 0.0  # whole run inside the goal region
    else:
        irregularity = path_irregularity(poses, log.goal, log.goal_radius)

    cpd = [closest_pedestrian_distance(r.robot, r.pedestrians) for r in records]
    ttc = [time_to_collision(r.robot, r.pedestrians) for r in records]

    waited = log.steps_waited()
    ratio = path_length_ratio(start, end, length) if length > 0 else 0.0
    return EpisodeMetrics(
        episode=log.episode_name,
        termination=log.termination,
        transport_failure=log.transport_failure,
        path_length_m=length,
        path_length_ratio=ratio,
        goal_traversal_ratio=gtr,
        path_irregularity_rad=irregularity,
        traversal_time_s=records[-1].t,
        avg_speed_mps=avg_speed,
        energy_j=energy,
        avg_acceleration_mps2=avg_acc,
        avg_jerk_mps3=avg_jerk,
        cpd_series_m=cpd,
        ttc_series_s=ttc,
        mean_cpd_m=float(np.mean(cpd)),
        mean_ttc_s=float(np.mean(ttc)),
        pedestrian_collisions=log.pedestrian_collision_count(),
        avg_wait_s=log.total_wait() / waited if waited else 0.0,
    )


@dataclass
class MetaReport:
    """Cross-episode summary: success rate, failure taxonomy, totals."""

    episode_count: int
    successes: int
    timeouts: int
    pedestrian_collision_episodes: int
    env_collision_episodes: int
    total_pedestrian_collisions: int
    avg_planning_wait_s: float

    @property
    def success_rate(self) -> float:
        return self.successes / self.episode_count

    @property
    def failure_tuple(self) -> tuple[int, int, int]:
        return (self.timeouts, self.pedestrian_collision_episodes,
                self.env_collision_episodes)

    def failure_tuple_str(self) -> str:
        return "/".join(str(n) for n in self.failure_tuple)

    def to_doc(self) -> dict:
        return {
            "episode_count": self.episode_count,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "failure_cases": self.failure_tuple_str(),
            "timeouts": self.timeouts,
            "pedestrian_collision_episodes": self.pedestrian_collision_episodes,
            "env_collision_episodes": self.env_collision_episodes,
            "total_pedestrian_collisions": self.total_pedestrian_collisions,
            "avg_planning_wait_s": self.avg_planning_wait_s,
        }


def aggregate_meta(logs: Sequence[EpisodeLog]) -> MetaReport:
    """Classify every episode by its primary outcome and sum collisions.

    A success is a Completion with zero pedestrian collision events. The
    failure tuple buckets episodes by termination kind, with completed
    episodes that collided counted as Pedestrian Collision failures, so
    successes plus the tuple always add up to the episode count.
    """
    if not logs:
        raise ValueError("need at least one episode log")
    successes = timeouts = ped_eps = env_eps = 0
    total_collisions = 0
    total_wait = 0.0
    total_steps = 0
    for log in logs:
        if log.termination is None:
            raise ValueError(f"log for {log.episode_name} has no termination")
        count = log.pedestrian_collision_count()
        total_collisions += count
        total_wait += log.total_wait()
        total_steps += log.steps_waited()
        kind = log.termination.kind
        if kind is TerminationKind.TIMEOUT:
            timeouts += 1
        elif kind is TerminationKind.ENV_COLLISION:
            env_eps += 1
        elif count > 0:
            ped_eps += 1
        else:
            successes += 1
    return MetaReport(
        episode_count=len(logs),
        successes=successes,
        timeouts=timeouts,
        pedestrian_collision_episodes=ped_eps,
        env_collision_episodes=env_eps,
        total_pedestrian_collisions=total_collisions,
        avg_planning_wait_s=total_wait / total_steps if total_steps else 0.0,
    )

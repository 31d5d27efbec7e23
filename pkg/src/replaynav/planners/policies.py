"""Bundled navigation policies behind one decide() interface.

A policy sees exactly what a wire-protocol client would see: the episode
metadata, the map, and per-tick agent states. Policies are deterministic
functions of that view, so in-process runs and socket-client runs of the
same episode produce identical commands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from ..core import AgentState, EnvironmentMap, Pose2D
from ..robot import HolonomicCommand, RobotSpec, UnicycleCommand, VelocityCommand
from .baseline import baseline_step
from .orca import OrcaParams, orca_step
from .social_forces import ObstacleIndex, SocialForcesParams, social_forces_step
from .waypoint import WaypointParams, WaypointPlanner


@dataclass
class PlanContext:
    """Episode view handed to a policy at episode start."""

    goal: tuple[float, float]
    goal_radius: float
    dt: float
    env: EnvironmentMap
    spec: RobotSpec


class _WaypointFollower:
    """Shared checkpoint logic: request a new subgoal when within the
    replan radius of the current one (or none is held yet)."""

    def __init__(self, params: Optional[WaypointParams] = None):
        self.params = params or WaypointParams()
        self._planner: Optional[WaypointPlanner] = None
        self._waypoint: Optional[Pose2D] = None
        self._ctx: Optional[PlanContext] = None

    def begin(self, ctx: PlanContext) -> None:
        self._ctx = ctx
        self._planner = WaypointPlanner(
            ctx.env, ctx.spec.radius, ctx.spec.v_max, self.params)
        self._waypoint = None

    def current(self, robot: AgentState) -> tuple[float, float]:
        assert self._planner is not None and self._ctx is not None
        wp = self._waypoint
        if wp is not None:
            dist = math.hypot(wp.x - robot.pose.x, wp.y - robot.pose.y)
            if dist > self.params.replan_radius:
                return (wp.x, wp.y)
        self._waypoint = self._planner.waypoint(robot.pose, self._ctx.goal)
        return (self._waypoint.x, self._waypoint.y)


class SocialForcesPolicy:
    """Direct goal attraction plus repulsions; no meta-planner."""

    control_mode = "holonomic"

    def __init__(self, params: Optional[SocialForcesParams] = None):
        self.params = params
        self._obstacles: Optional[ObstacleIndex] = None
        self._ctx: Optional[PlanContext] = None

    def begin_episode(self, ctx: PlanContext) -> None:
        self._ctx = ctx
        if self.params is None:
            self.params = SocialForcesParams(desired_speed=ctx.spec.v_max)
        self._obstacles = ObstacleIndex(ctx.env)

    def decide(self, robot: AgentState,
               pedestrians: Sequence[AgentState]) -> VelocityCommand:
        ctx = self._ctx
        nearest = self._obstacles.nearest(robot.pose.x, robot.pose.y)
        obstacle_points = [nearest] if nearest is not None else []
        vx, vy = social_forces_step(
            robot, pedestrians, obstacle_points, ctx.goal, self.params,
            ctx.dt, v_max=ctx.spec.v_max)
        return HolonomicCommand(vx, vy)


class OrcaPolicy:
    """Velocity-obstacle avoidance toward meta-planner subgoals."""

    control_mode = "holonomic"

    def __init__(self, params: Optional[OrcaParams] = None,
                 waypoints: Optional[WaypointParams] = None):
        self.params = params or OrcaParams()
        self._follower = _WaypointFollower(waypoints)
        self._ctx: Optional[PlanContext] = None

    def begin_episode(self, ctx: PlanContext) -> None:
        self._ctx = ctx
        self._follower.begin(ctx)

    def decide(self, robot: AgentState,
               pedestrians: Sequence[AgentState]) -> VelocityCommand:
        ctx = self._ctx
        wx, wy = self._follower.current(robot)
        dx, dy = wx - robot.pose.x, wy - robot.pose.y
        dist = math.hypot(dx, dy)
        if dist < 1e-9:
            preferred = (0.0, 0.0)
        else:
            speed = min(ctx.spec.v_max, dist / ctx.dt)
            preferred = (speed * dx / dist, speed * dy / dist)
        vx, vy = orca_step(robot, pedestrians, preferred, self.params,
                           ctx.spec.v_max, ctx.dt)
        return HolonomicCommand(vx, vy)


class BaselinePolicy:
    """Pedestrian-unaware pure pursuit of meta-planner subgoals."""

    control_mode = "unicycle"

    def __init__(self, waypoints: Optional[WaypointParams] = None):
        self._follower = _WaypointFollower(waypoints)
        self._ctx: Optional[PlanContext] = None

    def begin_episode(self, ctx: PlanContext) -> None:
        self._ctx = ctx
        self._follower.begin(ctx)

    def decide(self, robot: AgentState,
               pedestrians: Sequence[AgentState]) -> VelocityCommand:
        waypoint = self._follower.current(robot)
        return baseline_step(robot, waypoint, self._ctx.spec)


POLICIES = {
    "social-forces": SocialForcesPolicy,
    "orca": OrcaPolicy,
    "baseline": BaselinePolicy,
}


def make_policy(name: str, **kwargs):
    try:
        factory = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown planner {name!r}; "
                         f"choose from {sorted(POLICIES)}") from None
    return factory(**kwargs)


class PolicySyncClient:
    """Adapter running a policy as an in-process synchronous client."""

    def __init__(self, policy):
        self.policy = policy

    def begin_episode(self, episode, spec: RobotSpec) -> None:
        ctx = PlanContext(
            goal=(episode.goal.x, episode.goal.y),
            goal_radius=episode.goal.radius,
            dt=episode.dt,
            env=episode.environment,
            spec=spec,
        )
        self.policy.begin_episode(ctx)

    def decide(self, state) -> VelocityCommand:
        return self.policy.decide(state.robot, state.pedestrians)

    def end_episode(self, log) -> None:
        pass

"""Pedestrian-unaware baseline: pure pursuit of the meta-planner waypoint
under unicycle constraints."""
from __future__ import annotations

import math

from ..core import AgentState, normalize_angle
from ..robot import RobotSpec, UnicycleCommand

TURN_GAIN = 2.0


def baseline_step(robot: AgentState, waypoint: tuple[float, float],
                  spec: RobotSpec) -> UnicycleCommand:
    """Steer toward the waypoint, slowing with bearing error.

    omega tracks the bearing error with a proportional gain (clamped at
    application time); speed scales with cos(error) so the robot turns in
    place when the waypoint is behind it.
    """
    dx = waypoint[0] - robot.pose.x
    dy = waypoint[1] - robot.pose.y
    if dx == 0.0 and dy == 0.0:
        return UnicycleCommand(0.0, 0.0)
    error = normalize_angle(math.atan2(dy, dx) - robot.pose.heading)
    omega = max(-spec.omega_max, min(spec.omega_max, TURN_GAIN * error))
    v = spec.v_max * max(0.0, math.cos(error))
    return UnicycleCommand(v, omega)

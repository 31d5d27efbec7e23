"""Robot command application under the two control modes.

Velocity control integrates a three-state unicycle with explicit Euler at
the simulator tick; the holonomic mode applies a velocity vector whose
magnitude is capped. Commands are clamped to the robot limits, never
rejected, so badly scaled clients keep running and get penalized by the
metrics instead of crashing the run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

from .core import AgentState, Pose2D, normalize_angle


@dataclass(frozen=True)
class RobotSpec:
    """Physical limits of the simulated base (Pioneer-like defaults)."""

    radius: float = 0.23
    v_max: float = 1.2
    omega_max: float = 1.9
    a_max: float | None = None
    control_mode: str = "unicycle"  # "unicycle" | "holonomic"

    def __post_init__(self):
        if self.v_max <= 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.control_mode not in ("unicycle", "holonomic"):
            raise ValueError(f"unknown control mode: {self.control_mode!r}")


@dataclass(frozen=True)
class UnicycleCommand:
    v: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.omega)):
            raise ValueError(f"non-finite unicycle command: {self}")


@dataclass(frozen=True)
class HolonomicCommand:
    vx: float
    vy: float

    def __post_init__(self):
        if not (math.isfinite(self.vx) and math.isfinite(self.vy)):
            raise ValueError(f"non-finite holonomic command: {self}")


VelocityCommand = Union[UnicycleCommand, HolonomicCommand]

STOP_UNICYCLE = UnicycleCommand(0.0, 0.0)
STOP_HOLONOMIC = HolonomicCommand(0.0, 0.0)


def _clamp(value: float, limit: float) -> float:
    return max(-limit, min(limit, value))


def step_unicycle(state: AgentState, cmd: UnicycleCommand, spec: RobotSpec,
                  dt: float) -> AgentState:
    """Explicit-Euler unicycle update.

    x += v cos(phi) dt, y += v sin(phi) dt, phi += omega dt, with v and
    omega clamped to spec limits first. The stored velocity uses the
    pre-step heading, matching the translation actually applied.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    v = _clamp(cmd.v, spec.v_max)
    omega = _clamp(cmd.omega, spec.omega_max)
    if spec.a_max is not None:
        # Longitudinal accel clamp relative to current speed along heading.
        prev_v = (state.velocity[0] * math.cos(state.pose.heading)
                  + state.velocity[1] * math.sin(state.pose.heading))
        v = max(prev_v - spec.a_max * dt, min(prev_v + spec.a_max * dt, v))

    heading = state.pose.heading
    vx = v * math.cos(heading)
    vy = v * math.sin(heading)
    pose = Pose2D(
        x=state.pose.x + vx * dt,
        y=state.pose.y + vy * dt,
        heading=normalize_angle(heading + omega * dt),
    )
    return replace(state, pose=pose, velocity=(vx, vy))


def step_holonomic(state: AgentState, cmd: HolonomicCommand, spec: RobotSpec,
                   dt: float) -> AgentState:
    """Velocity-limited holonomic update.

    The commanded vector is rescaled to magnitude v_max when it exceeds
    the cap. Heading snaps to the direction of motion (no angular rate
    limit), and is preserved when the applied velocity is zero.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    vx, vy = cmd.vx, cmd.vy
    speed = math.hypot(vx, vy)
    if speed > spec.v_max:
        scale = spec.v_max / speed
        vx *= scale
        vy *= scale
    if spec.a_max is not None:
        dvx = vx - state.velocity[0]
        dvy = vy - state.velocity[1]
        dv = math.hypot(dvx, dvy)
        cap = spec.a_max * dt
        if dv > cap:
            scale = cap / dv
            vx = state.velocity[0] + dvx * scale
            vy = state.velocity[1] + dvy * scale

    heading = state.pose.heading
    if vx != 0.0 or vy != 0.0:
        heading = math.atan2(vy, vx)
    pose = Pose2D(
        x=state.pose.x + vx * dt,
        y=state.pose.y + vy * dt,
        heading=heading,
    )
    return replace(state, pose=pose, velocity=(vx, vy))


def apply_command(state: AgentState, cmd: VelocityCommand, spec: RobotSpec,
                  dt: float) -> AgentState:
    """Dispatch on command form; each form carries its own kinematics."""
    if isinstance(cmd, UnicycleCommand):
        return step_unicycle(state, cmd, spec, dt)
    if isinstance(cmd, HolonomicCommand):
        return step_holonomic(state, cmd, spec, dt)
    raise TypeError(f"not a velocity command: {cmd!r}")


def stop_command(spec: RobotSpec) -> VelocityCommand:
    """Zero command in the spec's configured control mode."""
    return STOP_UNICYCLE if spec.control_mode == "unicycle" else STOP_HOLONOMIC


def position_to_velocity(pose: Pose2D, target: tuple[float, float], dt: float,
                         spec: RobotSpec) -> VelocityCommand:
    """One-tick conversion of a position target into a velocity command.

    Holonomic mode: (target - pose) / dt. Unicycle mode: the distance and
    heading error over one tick. Clamping happens at application time.
    """
    dx = target[0] - pose.x
    dy = target[1] - pose.y
    if spec.control_mode == "holonomic":
        return HolonomicCommand(dx / dt, dy / dt)
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return UnicycleCommand(0.0, 0.0)
    err = normalize_angle(math.atan2(dy, dx) - pose.heading)
    return UnicycleCommand(dist / dt, err / dt)

"""Shared geometric and agent types used across the benchmark.

All angles are radians. Headings are stored normalized into (-pi, pi];
every operation that produces an angle re-normalizes, so downstream code
never has to reason about wrap-around.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TAU = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Map an angle onto (-pi, pi]. Idempotent."""
    if not math.isfinite(theta):
        raise ValueError(f"non-finite angle: {theta!r}")
    wrapped = math.remainder(theta, TAU)
    if wrapped <= -math.pi:
        wrapped += TAU
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position in meters, heading in (-pi, pi]."""

    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite position: ({self.x}, {self.y})")
        object.__setattr__(self, "heading", normalize_angle(self.heading))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class AgentState:
    """Pose plus instantaneous velocity and body radius of one agent."""

    id: int | str
    pose: Pose2D
    velocity: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.3

    def __post_init__(self):
        vx, vy = self.velocity
        if not (math.isfinite(vx) and math.isfinite(vy)):
            raise ValueError(f"non-finite velocity: {self.velocity!r}")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "velocity", (float(vx), float(vy)))

    @property
    def position(self) -> np.ndarray:
        return self.pose.position

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


class EnvironmentMap:
    """2D traversability raster.

    ``traversable[iy, ix]`` is True where the robot may drive. Cell
    ``(ix, iy)`` covers the world square whose lower-left corner is
    ``origin + (ix, iy) * resolution``. Anything outside the grid counts
    as an obstacle.
    """

    def __init__(self, traversable: np.ndarray, resolution: float,
                 origin: tuple[float, float] = (0.0, 0.0), name: str = ""):
        grid = np.asarray(traversable, dtype=bool)
        if grid.ndim != 2 or grid.size == 0:
            raise ValueError("traversability grid must be a non-empty 2D array")
        if resolution <= 0:
            raise ValueError(f"resolution must be positive, got {resolution}")
        if not grid.any():
            raise ValueError("environment has no traversable cells")
        self.traversable = grid
        self.traversable.setflags(write=False)
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.traversable.shape

    @property
    def width_m(self) -> float:
        return self.traversable.shape[1] * self.resolution

    @property
    def height_m(self) -> float:
        return self.traversable.shape[0] * self.resolution

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(ix, iy) cell indices containing the world point, unclamped."""
        ix = math.floor((x - self.origin[0]) / self.resolution)
        iy = math.floor((y - self.origin[1]) / self.resolution)
        return ix, iy

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.resolution,
                self.origin[1] + (iy + 0.5) * self.resolution)

    def in_bounds(self, ix: int, iy: int) -> bool:
        h, w = self.traversable.shape
        return 0 <= ix < w and 0 <= iy < h

    def is_traversable(self, x: float, y: float) -> bool:
        """True iff the world point lies in a free in-bounds cell."""
        ix, iy = self.cell_of(x, y)
        return self.in_bounds(ix, iy) and bool(self.traversable[iy, ix])

    def occupied_cells(self) -> np.ndarray:
        """(N, 2) array of (ix, iy) indices of obstacle cells."""
        iys, ixs = np.nonzero(~self.traversable)
        return np.stack([ixs, iys], axis=1)

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.packbits(self.traversable).tobytes())
        h.update(f"{self.traversable.shape}|{self.resolution!r}|{self.origin!r}".encode())
        return h.hexdigest()


class PedestrianTrack:
    """Time-ordered position samples of one recorded pedestrian.

    Positions between samples are linearly interpolated; velocity is the
    finite difference of the interpolated positions over the sample grid
    (forward differences, backward at the final sample).
    """

    def __init__(self, id: int | str, samples):
        pts = [(float(t), float(x), float(y)) for t, x, y in samples]
        if not pts:
            raise ValueError("track needs at least one sample")
        times = [p[0] for p in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"track {id}: sample times must strictly increase")
        self.id = id
        self.times = np.array(times)
        self.points = np.array([[p[1], p[2]] for p in pts])

    @property
    def entry_time(self) -> float:
        return float(self.times[0])

    @property
    def exit_time(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return self.exit_time - self.entry_time

    def active_at(self, t: float) -> bool:
        return self.entry_time <= t <= self.exit_time

    def position_at(self, t: float) -> np.ndarray:
        x = np.interp(t, self.times, self.points[:, 0])
        y = np.interp(t, self.times, self.points[:, 1])
        return np.array([x, y])

    def velocity_at(self, t: float) -> np.ndarray:
        """Finite-difference velocity over the sample grid at time t.

        Uses the forward difference of the segment containing t; at or
        beyond the last sample, the backward difference of the final
        segment. Single-sample tracks have zero velocity.
        """
        if len(self.times) < 2:
            return np.zeros(2)
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = max(0, min(i, len(self.times) - 2))
        dt = self.times[i + 1] - self.times[i]
        return (self.points[i + 1] - self.points[i]) / dt

    def segment_count(self) -> int:
        return len(self.times) - 1


@dataclass(frozen=True)
class Goal:
    x: float
    y: float
    radius: float = 0.3

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class Episode:
    """One benchmark unit: map, robot start/goal, pedestrian tracks, budget."""

    name: str
    environment: EnvironmentMap
    start: Pose2D
    goal: Goal
    tracks: list[PedestrianTrack] = field(default_factory=list)
    time_budget: float = 60.0
    tick_rate: float = 25.0
    ped_radius: float = 0.30

    def __post_init__(self):
        if self.tick_rate <= 0:
            raise ValueError(f"tick rate must be positive, got {self.tick_rate}")
        if self.time_budget <= 0:
            raise ValueError(f"time budget must be positive, got {self.time_budget}")
        if not self.environment.is_traversable(self.start.x, self.start.y):
            raise ValueError(f"episode {self.name}: start not on a traversable cell")
        if not self.environment.is_traversable(self.goal.x, self.goal.y):
            raise ValueError(f"episode {self.name}: goal not on a traversable cell")

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    @property
    def budget_ticks(self) -> int:
        return round(self.time_budget * self.tick_rate)


def distance_to_goal(state: AgentState, goal) -> float:
    """Euclidean distance from the agent center to a goal point."""
    gx, gy = _point_xy(goal)
    return math.hypot(state.pose.x - gx, state.pose.y - gy)


def bearing_error(pose: Pose2D, goal) -> float:
    """Absolute angle in [0, pi] between heading and the goal direction.

    Degenerate case: a pose exactly at the goal has no goal direction and
    returns 0 so that metric loops stay total.
    """
    gx, gy = _point_xy(goal)
    dx, dy = gx - pose.x, gy - pose.y
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return abs(normalize_angle(math.atan2(dy, dx) - pose.heading))


def _point_xy(point) -> tuple[float, float]:
    if isinstance(point, Goal):
        return point.x, point.y
    if isinstance(point, Pose2D):
        return point.x, point.y
    x, y = point
    return float(x), float(y)

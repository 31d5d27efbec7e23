"""Replay-based social navigation benchmark."""

__version__ = "0.1.0"

from .core import (
    AgentState,
    EnvironmentMap,
    Episode,
    Goal,
    PedestrianTrack,
    Pose2D,
    bearing_error,
    distance_to_goal,
    normalize_angle,
)

__all__ = [
    "AgentState",
    "EnvironmentMap",
    "Episode",
    "Goal",
    "PedestrianTrack",
    "Pose2D",
    "bearing_error",
    "distance_to_goal",
    "normalize_angle",
    "__version__",
]

from .baseline import baseline_step
from .orca import HalfPlane, OrcaParams, orca_halfplane, orca_step, solve_velocity_lp
from .policies import (
    BaselinePolicy,
    OrcaPolicy,
    PlanContext,
    PolicySyncClient,
    SocialForcesPolicy,
    make_policy,
)
from .social_forces import ObstacleIndex, SocialForcesParams, social_forces_step
from .waypoint import WaypointParams, WaypointPlanner

__all__ = [
    "BaselinePolicy",
    "HalfPlane",
    "ObstacleIndex",
    "OrcaParams",
    "OrcaPolicy",
    "PlanContext",
    "PolicySyncClient",
    "SocialForcesParams",
    "SocialForcesPolicy",
    "WaypointParams",
    "WaypointPlanner",
    "baseline_step",
    "make_policy",
    "orca_halfplane",
    "orca_step",
    "social_forces_step",
    "solve_velocity_lp",
]

import numpy as np
import pytest

from replaynav.core import EnvironmentMap, Episode, Goal, Pose2D


def open_environment(size_m: float = 12.0, resolution: float = 0.1,
                     name: str = "open") -> EnvironmentMap:
    n = round(size_m / resolution)
    return EnvironmentMap(np.ones((n, n), dtype=bool), resolution, name=name)


def walled_environment(size_m: float = 12.0, resolution: float = 0.1,
                       name: str = "walled") -> EnvironmentMap:
    n = round(size_m / resolution)
    grid = np.ones((n, n), dtype=bool)
    grid[0, :] = grid[-1, :] = grid[:, 0] = grid[:, -1] = False
    return EnvironmentMap(grid, resolution, name=name)


@pytest.fixture
def open_env() -> EnvironmentMap:
    return open_environment()


@pytest.fixture
def straight_episode(open_env) -> Episode:
    """Unobstructed 6 m straight run used across engine/protocol tests."""
    return Episode(
        name="straight6",
        environment=open_env,
        start=Pose2D(2.0, 6.0, 0.0),
        goal=Goal(8.0, 6.0, 0.3),
        tracks=[],
        time_budget=60.0,
        tick_rate=25.0,
    )

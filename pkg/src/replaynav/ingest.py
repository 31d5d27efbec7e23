"""Dataset ingestion: track files, environment rasters, episode manifests.

Track files are plain text with one observation per row, columns
``frame_id ped_id x y`` (ETH/UCY convention), whitespace separated. The
frame rate arrives out of band. Environment rasters are portable graymaps
(0 = obstacle, 255 = free) with a JSON sidecar giving resolution and
world origin.
"""
from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .core import EnvironmentMap, Episode, Goal, PedestrianTrack, Pose2D


class TrackFileError(ValueError):
    """Malformed track file; message carries the 1-based line number."""


@dataclass
class RawTrackFile:
    """Parsed observations grouped per pedestrian id, in file units."""

    rows: list[tuple[int, int, float, float]]
    frame_rate: float

    def pedestrian_ids(self) -> list[int]:
        seen: dict[int, None] = {}
        for _, pid, _, _ in self.rows:
            seen.setdefault(pid, None)
        return list(seen)

    def samples_for(self, ped_id: int) -> list[tuple[float, float, float]]:
        """(t, x, y) samples of one pedestrian, seconds from frame 0."""
        return [(frame / self.frame_rate, x, y)
                for frame, pid, x, y in self.rows if pid == ped_id]


def parse_track_file(text: str, frame_rate: float) -> RawTrackFile:
    """Parse and validate `frame_id ped_id x y` rows.

    Rejects non-numeric fields, duplicate (frame, id) pairs, and frames
    that fail to increase within a pedestrian id, naming the offending
    line.
    """
    if frame_rate <= 0:
        raise ValueError(f"frame rate must be positive, got {frame_rate}")
    rows: list[tuple[int, int, float, float]] = []
    last_frame: dict[int, int] = {}
    seen: set[tuple[int, int]] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) != 4:
            raise TrackFileError(
                f"line {lineno}: expected 4 columns, got {len(fields)}")
        try:
            frame = _as_int(fields[0])
            pid = _as_int(fields[1])
            x = float(fields[2])
            y = float(fields[3])
        except ValueError as exc:
            raise TrackFileError(f"line {lineno}: {exc}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise TrackFileError(f"line {lineno}: non-finite position")
        if (frame, pid) in seen:
            raise TrackFileError(
                f"line {lineno}: duplicate observation for frame {frame}, id {pid}")
        if pid in last_frame and frame <= last_frame[pid]:
            raise TrackFileError(
                f"line {lineno}: frame {frame} does not increase for id {pid}")
        seen.add((frame, pid))
        last_frame[pid] = frame
        rows.append((frame, pid, x, y))
    return RawTrackFile(rows=rows, frame_rate=float(frame_rate))


def _as_int(token: str) -> int:
    value = float(token)
    if value != int(value):
        raise ValueError(f"expected integer, got {token!r}")
    return int(value)


def resample_track(samples, tick_rate: float,
                   ped_id: int | str = 0) -> PedestrianTrack:
    """Resample a keyframe polyline onto the simulator tick grid.

    Positions are linearly interpolated at every tick between entry and
    exit time. Keyframes that fall off the tick grid are kept in the
    output so the original positions are reproduced exactly at their own
    timestamps. Time is 1:1 with the recording.
    """
    if tick_rate <= 0:
        raise ValueError(f"tick rate must be positive, got {tick_rate}")
    pts = sorted((float(t), float(x), float(y)) for t, x, y in samples)
    if len(pts) < 2:
        raise ValueError("need at least 2 samples to define velocities")
    src = PedestrianTrack(ped_id, pts)
    entry, exit_ = src.entry_time, src.exit_time

    first_tick = math.ceil(entry * tick_rate - 1e-9)
    last_tick = math.floor(exit_ * tick_rate + 1e-9)
    ticks = {k / tick_rate for k in range(first_tick, last_tick + 1)}
    # Off-grid keyframes stay in the output so recorded positions are
    # reproduced exactly at their own timestamps.
    merged: list[float] = []
    for t in sorted(ticks | {float(t) for t in src.times}):
        if merged and t - merged[-1] <= 1e-9:
            continue
        merged.append(t)
    out = [(t, *src.position_at(t)) for t in merged]
    return PedestrianTrack(ped_id, out)


PGM_FREE_THRESHOLD = 128  # gray >= threshold counts as traversable


def load_environment(raster_path: str | Path,
                     manifest_path: str | Path | None = None) -> EnvironmentMap:
    """Load a graymap raster plus its JSON sidecar into an EnvironmentMap.

    The image's top row is the highest y; the grid is flipped so row 0 of
    the traversability array sits at the world origin (y grows upward).
    """
    raster_path = Path(raster_path)
    if manifest_path is None:
        manifest_path = raster_path.with_suffix(".json")
    manifest_path = Path(manifest_path)
    try:
        img = Image.open(raster_path).convert("L")
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read raster {raster_path}: {exc}") from exc
    gray = np.asarray(img)
    traversable = np.flipud(gray >= PGM_FREE_THRESHOLD)
    meta = json.loads(manifest_path.read_text())
    env = EnvironmentMap(
        traversable=traversable,
        resolution=float(meta["resolution"]),
        origin=tuple(meta.get("origin", (0.0, 0.0))),
        name=meta.get("name", raster_path.stem),
    )
    return env


def save_environment(env: EnvironmentMap, raster_path: str | Path) -> None:
    """Inverse of load_environment: write PGM raster plus JSON sidecar."""
    raster_path = Path(raster_path)
    gray = np.where(np.flipud(env.traversable), 255, 0).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(raster_path)
    meta = {"resolution": env.resolution, "origin": list(env.origin),
            "name": env.name}
    raster_path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


@dataclass
class EpisodeLibrary:
    """Named episodes plus the environments they reference."""

    episodes: dict[str, Episode] = field(default_factory=dict)
    environments: dict[str, EnvironmentMap] = field(default_factory=dict)

    def __post_init__(self):
        for name, ep in self.episodes.items():
            if ep.environment.name not in self.environments:
                raise ValueError(
                    f"episode {name} references unknown environment "
                    f"{ep.environment.name!r}")

    def add(self, episode: Episode) -> None:
        self.environments.setdefault(episode.environment.name, episode.environment)
        self.episodes[episode.name] = episode

    def names(self) -> list[str]:
        return list(self.episodes)

    def __len__(self) -> int:
        return len(self.episodes)


def load_episode_manifest(path: str | Path,
                          environments: dict[str, EnvironmentMap] | None = None,
                          ) -> Episode:
    """Build an Episode from a JSON manifest.

    Relative paths inside the manifest (maps, track files) resolve
    against the manifest's directory. ``environments`` acts as a cache so
    a library load parses each map once.
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    base = path.parent

    env_ref = doc["environment"]
    env_key = Path(env_ref).stem
    if environments is not None and env_key in environments:
        env = environments[env_key]
    else:
        raster = base / env_ref
        if raster.suffix == "":
            raster = raster.with_suffix(".pgm")
        env = load_environment(raster)
        if environments is not None:
            environments[env.name] = env

    tracks: list[PedestrianTrack] = []
    tick_rate = float(doc.get("tick_rate", 25.0))
    for section in doc.get("pedestrians", []):
        text = (base / section["track_file"]).read_text()
        raw = parse_track_file(text, float(section["frame_rate"]))
        window = section.get("time_window")
        wanted = section.get("ids")
        for pid in raw.pedestrian_ids():
            if wanted is not None and pid not in wanted:
                continue
            samples = raw.samples_for(pid)
            if window is not None:
                t0, t1 = float(window[0]), float(window[1])
                samples = [(t - t0, x, y) for t, x, y in samples if t0 <= t <= t1]
            if len(samples) < 2:
                continue
            tracks.append(resample_track(samples, tick_rate, ped_id=pid))

    start = doc["start"]
    goal = doc["goal"]
    return Episode(
        name=doc.get("name", path.stem),
        environment=env,
        start=Pose2D(start["x"], start["y"], start.get("heading", 0.0)),
        goal=Goal(goal["x"], goal["y"], goal.get("radius", 0.3)),
        tracks=tracks,
        time_budget=float(doc.get("time_budget", 60.0)),
        tick_rate=tick_rate,
        ped_radius=float(doc.get("pedestrian_radius", 0.30)),
    )


def load_library(path: str | Path) -> EpisodeLibrary:
    """Load every `episodes/*.json` manifest under a library directory."""
    path = Path(path)
    manifest_dir = path / "episodes" if (path / "episodes").is_dir() else path
    manifests = sorted(manifest_dir.glob("*.json"))
    if not manifests:
        raise FileNotFoundError(f"no episode manifests under {path}")
    environments: dict[str, EnvironmentMap] = {}
    lib = EpisodeLibrary()
    for manifest in manifests:
        lib.add(load_episode_manifest(manifest, environments))
    return lib


def grid_path_exists(env: EnvironmentMap, a: tuple[int, int],
                     b: tuple[int, int]) -> bool:
    """4-connected BFS between two cells over traversable space."""
    if not (env.in_bounds(*a) and env.in_bounds(*b)):
        return False
    if not (env.traversable[a[1], a[0]] and env.traversable[b[1], b[0]]):
        return False
    if a == b:
        return True
    h, w = env.traversable.shape
    seen = np.zeros((h, w), dtype=bool)
    seen[a[1], a[0]] = True
    frontier = deque([a])
    while frontier:
        ix, iy = frontier.popleft()
        for nx, ny in ((ix + 1, iy), (ix - 1, iy), (ix, iy + 1), (ix, iy - 1)):
            if 0 <= nx < w and 0 <= ny < h and not seen[ny, nx] \
                    and env.traversable[ny, nx]:
                if (nx, ny) == b:
                    return True
                seen[ny, nx] = True
                frontier.append((nx, ny))
    return False


class SamplerExhausted(RuntimeError):
    """No valid start/goal pair found within the retry budget."""


def sample_random_episodes(library: EpisodeLibrary, count: int, seed: int,
                           v_max: float = 1.2, reach_time: float = 25.0,
                           goal_radius: float = 0.3,
                           max_attempts: int = 1000) -> list[Episode]:
    """Sample episodes with random reachable start/goal pairs.

    Each sample picks a source episode uniformly (reusing its environment
    and recorded pedestrian section), then draws start and goal cells
    that are straight-line reachable within ``reach_time`` at ``v_max``
    and joined by a 4-connected grid path. Identical (library, count,
    seed) inputs give identical output.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not library.episodes:
        raise ValueError("library is empty")
    rng = random.Random(seed)
    sources = sorted(library.episodes)
    out: list[Episode] = []
    for index in range(count):
        source = library.episodes[rng.choice(sources)]
        env = source.environment
        free = np.argwhere(env.traversable)  # (iy, ix) rows
        pair = None
        for _ in range(max_attempts):
            sy, sx = free[rng.randrange(len(free))]
            gy, gx = free[rng.randrange(len(free))]
            if (sx, sy) == (gx, gy):
                continue
            start_xy = env.cell_center(int(sx), int(sy))
            goal_xy = env.cell_center(int(gx), int(gy))
            dist = math.hypot(goal_xy[0] - start_xy[0], goal_xy[1] - start_xy[1])
            if dist / v_max > reach_time:
                continue
            if not grid_path_exists(env, (int(sx), int(sy)), (int(gx), int(gy))):
                continue
            pair = (start_xy, goal_xy)
            break
        if pair is None:
            raise SamplerExhausted(
                f"no valid start/goal pair in {env.name} after {max_attempts} tries")
        start_xy, goal_xy = pair
        heading = math.atan2(goal_xy[1] - start_xy[1], goal_xy[0] - start_xy[0])
        out.append(Episode(
            name=f"random_{seed}_{index:03d}",
            environment=env,
            start=Pose2D(start_xy[0], start_xy[1], heading),
            goal=Goal(goal_xy[0], goal_xy[1], goal_radius),
            tracks=source.tracks,
            time_budget=source.time_budget,
            tick_rate=source.tick_rate,
            ped_radius=source.ped_radius,
        ))
    return out


def episode_to_manifest(episode: Episode, source_manifest: dict | None = None) -> dict:
    """Manifest document for a sampled episode (tracks referenced by the
    source manifest's pedestrian sections when available)."""
    doc = {
        "name": episode.name,
        "environment": episode.environment.name,
        "start": {"x": episode.start.x, "y": episode.start.y,
                  "heading": episode.start.heading},
        "goal": {"x": episode.goal.x, "y": episode.goal.y,
                 "radius": episode.goal.radius},
        "time_budget": episode.time_budget,
        "tick_rate": episode.tick_rate,
        "pedestrian_radius": episode.ped_radius,
    }
    if source_manifest is not None and "pedestrians" in source_manifest:
        doc["pedestrians"] = source_manifest["pedestrians"]
    return doc

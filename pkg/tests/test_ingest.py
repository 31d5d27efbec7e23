import json
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replaynav.core import EnvironmentMap, Episode, Goal, Pose2D
from replaynav.ingest import (
    EpisodeLibrary,
    SamplerExhausted,
    TrackFileError,
    grid_path_exists,
    load_environment,
    load_episode_manifest,
    load_library,
    parse_track_file,
    resample_track,
    sample_random_episodes,
    save_environment,
)
from tests.conftest import open_environment


class TestParseTrackFile:
    def test_two_samples(self):
        raw = parse_track_file("0 1 0.0 0.0\n10 1 1.0 0.0", frame_rate=10.0)
        assert raw.pedestrian_ids() == [1]
        assert raw.samples_for(1) == [(0.0, 0.0, 0.0), (1.0, 1.0, 0.0)]

    def test_empty_text(self):
        raw = parse_track_file("", frame_rate=25.0)
        assert raw.rows == []
        assert raw.pedestrian_ids() == []

    def test_interleaved_ids_keep_per_id_order(self):
        text = "0 1 0 0\n0 2 5 5\n10 1 1 0\n10 2 6 5\n20 2 7 5"
        raw = parse_track_file(text, frame_rate=10.0)
        # Oracle: naive per-id filter over the original rows.
        rows = [tuple(float(v) for v in line.split()) for line in text.splitlines()]
        for pid in (1, 2):
            expected = [(f / 10.0, x, y) for f, p, x, y in rows if p == pid]
            assert raw.samples_for(pid) == expected

    def test_non_numeric_field_names_line(self):
        with pytest.raises(TrackFileError, match="line 2"):
            parse_track_file("0 1 0 0\n10 1 abc 0", frame_rate=10.0)

    def test_duplicate_frame_id_pair(self):
        with pytest.raises(TrackFileError, match="duplicate"):
            parse_track_file("0 1 0 0\n0 1 1 1", frame_rate=10.0)

    def test_decreasing_frames_within_id(self):
        with pytest.raises(TrackFileError, match="does not increase"):
            parse_track_file("10 1 0 0\n0 1 1 1", frame_rate=10.0)

    def test_column_count(self):
        with pytest.raises(TrackFileError, match="4 columns"):
            parse_track_file("0 1 0", frame_rate=10.0)

    def test_comments_and_blank_lines_skipped(self):
        raw = parse_track_file("# header\n\n0 3 1 2\n", frame_rate=10.0)
        assert raw.pedestrian_ids() == [3]


class TestResampleTrack:
    def test_linear_segment_at_25hz(self):
        track = resample_track([(0.0, 0.0, 0.0), (1.0, 1.0, 0.0)], 25.0)
        assert track.segment_count() + 1 == 26
        for k in range(26):
            t = k / 25.0
            assert track.times[k] == pytest.approx(t)
            assert track.points[k][0] == pytest.approx(k / 25.0)
            assert track.points[k][1] == 0.0
            assert np.linalg.norm(track.velocity_at(t)) == pytest.approx(1.0)

    def test_stationary_pedestrian(self):
        track = resample_track([(0.0, 2.0, 3.0), (2.0, 2.0, 3.0)], 25.0)
        for t in track.times:
            assert np.linalg.norm(track.velocity_at(float(t))) == 0.0

    def test_second_segment_interpolation(self):
        # Keyframes (0,(0,0)), (1,(1,0)), (2,(1,1)); tick 37 is t=1.48
        track = resample_track([(0, 0, 0), (1, 1, 0), (2, 1, 1)], 25.0)
        idx = int(np.searchsorted(track.times, 1.48))
        assert track.times[idx] == pytest.approx(1.48)
        assert track.points[idx] == pytest.approx([1.0, 0.48])

    def test_single_sample_rejected(self):
        with pytest.raises(ValueError):
            resample_track([(0.0, 0.0, 0.0)], 25.0)

    def test_keyframes_reproduced_exactly_off_grid(self):
        samples = [(0.0, 0.0, 0.0), (0.13, 1.0, 2.0), (0.5, -1.0, 0.7)]
        track = resample_track(samples, 25.0)
        for t, x, y in samples:
            assert track.position_at(t) == pytest.approx([x, y], abs=0.0)

    def test_duration_preserved_within_one_tick(self):
        samples = [(0.08, 0.0, 0.0), (1.97, 2.0, 1.0)]
        track = resample_track(samples, 25.0)
        raw_duration = 1.97 - 0.08
        assert abs(track.duration - raw_duration) <= 1.0 / 25.0

    @settings(max_examples=30)
    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(-5, 5), st.floats(-5, 5)),
                    min_size=2, max_size=8, unique_by=lambda s: round(s[0], 3)))
    def test_speed_never_exceeds_max_segment_speed(self, samples):
        samples = sorted(samples)
        times = [s[0] for s in samples]
        if min(b - a for a, b in zip(times, times[1:])) < 1e-3:
            return
        track = resample_track(samples, 25.0)
        seg_speeds = [
            math.hypot(x1 - x0, y1 - y0) / (t1 - t0)
            for (t0, x0, y0), (t1, x1, y1) in zip(samples, samples[1:])
        ]
        cap = max(seg_speeds) + 1e-6
        for t in track.times:
            assert np.linalg.norm(track.velocity_at(float(t))) <= cap


class TestEnvironmentIO:
    def test_round_trip(self, tmp_path):
        grid = np.ones((10, 10), dtype=bool)
        grid[0, :] = False
        grid[3, 4] = False
        env = EnvironmentMap(grid, 0.1, origin=(1.0, 2.0), name="demo")
        save_environment(env, tmp_path / "demo.pgm")
        loaded = load_environment(tmp_path / "demo.pgm")
        assert np.array_equal(loaded.traversable, grid)
        assert loaded.resolution == 0.1
        assert loaded.origin == (1.0, 2.0)
        assert loaded.name == "demo"

    def test_all_free_count(self, tmp_path):
        env = EnvironmentMap(np.ones((10, 10), dtype=bool), 0.1)
        save_environment(env, tmp_path / "free.pgm")
        loaded = load_environment(tmp_path / "free.pgm")
        assert int(loaded.traversable.sum()) == 100

    def test_solid_border(self, tmp_path):
        grid = np.ones((8, 8), dtype=bool)
        grid[0, :] = grid[-1, :] = grid[:, 0] = grid[:, -1] = False
        save_environment(EnvironmentMap(grid, 0.2), tmp_path / "b.pgm")
        loaded = load_environment(tmp_path / "b.pgm")
        assert not loaded.traversable[0].any()
        assert not loaded.traversable[-1].any()
        assert loaded.traversable[1:-1, 1:-1].all()

    def test_checkerboard_count(self, tmp_path):
        n = 9
        grid = (np.indices((n, n)).sum(axis=0) % 2) == 0
        save_environment(EnvironmentMap(grid, 0.1), tmp_path / "c.pgm")
        loaded = load_environment(tmp_path / "c.pgm")
        # Oracle: brute-force count of even-parity cells.
        expected = sum(1 for iy in range(n) for ix in range(n)
                       if (ix + iy) % 2 == 0)
        assert expected == math.ceil(n * n / 2)
        assert int(loaded.traversable.sum()) == expected

    def test_zero_traversable_rejected(self, tmp_path):
        from PIL import Image

        Image.fromarray(np.zeros((5, 5), dtype=np.uint8), mode="L").save(
            tmp_path / "solid.pgm")
        (tmp_path / "solid.json").write_text('{"resolution": 0.1}')
        with pytest.raises(ValueError):
            load_environment(tmp_path / "solid.pgm")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(OSError):
            load_environment(tmp_path / "missing.pgm")


def flood_fill_reachable(env: EnvironmentMap, a, b) -> bool:
    """Independent oracle: set-based 4-connected flood fill."""
    h, w = env.traversable.shape
    if not (env.traversable[a[1], a[0]] and env.traversable[b[1], b[0]]):
        return False
    seen = {a}
    stack = [a]
    while stack:
        x, y = stack.pop()
        if (x, y) == b:
            return True
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if 0 <= nx < w and 0 <= ny < h and (nx, ny) not in seen \
                    and env.traversable[ny, nx]:
                seen.add((nx, ny))
                stack.append((nx, ny))
    return False


def make_library(env=None) -> EpisodeLibrary:
    env = env or open_environment()
    lib = EpisodeLibrary()
    lib.add(Episode(name="seed_ep", environment=env, start=Pose2D(1, 1, 0),
                    goal=Goal(10, 10), tracks=[]))
    return lib


class TestSampler:
    def test_deterministic(self):
        lib = make_library()
        a = sample_random_episodes(lib, 5, seed=7)
        b = sample_random_episodes(lib, 5, seed=7)
        assert [(e.name, e.start, e.goal.x, e.goal.y) for e in a] == \
               [(e.name, e.start, e.goal.x, e.goal.y) for e in b]

    def test_reach_time_bound(self):
        lib = make_library(open_environment(size_m=50.0, resolution=0.5))
        episodes = sample_random_episodes(lib, 40, seed=3, v_max=1.2)
        for ep in episodes:
            dist = math.hypot(ep.goal.x - ep.start.x, ep.goal.y - ep.start.y)
            assert dist <= 1.2 * 25.0 + 1e-9

    def test_split_environment_keeps_components(self):
        # Solid wall between left and right halves.
        n = 40
        grid = np.ones((n, n), dtype=bool)
        grid[:, n // 2] = False
        env = EnvironmentMap(grid, 0.25, name="split")
        lib = EpisodeLibrary()
        lib.add(Episode(name="seed_ep", environment=env,
                        start=Pose2D(0.5, 0.5, 0), goal=Goal(2.0, 2.0)))
        episodes = sample_random_episodes(lib, 25, seed=11)
        for ep in episodes:
            a = env.cell_of(ep.start.x, ep.start.y)
            b = env.cell_of(ep.goal.x, ep.goal.y)
            assert flood_fill_reachable(env, a, b)

    def test_start_goal_traversable(self):
        lib = make_library(open_environment())
        for ep in sample_random_episodes(lib, 10, seed=2):
            assert ep.environment.is_traversable(ep.start.x, ep.start.y)
            assert ep.environment.is_traversable(ep.goal.x, ep.goal.y)

    def test_exhaustion(self):
        # Single free cell: no distinct start/goal pair exists.
        grid = np.zeros((5, 5), dtype=bool)
        grid[2, 2] = True
        env = EnvironmentMap(grid, 1.0, name="lonely")
        lib = EpisodeLibrary()
        lib.add(Episode(name="seed_ep", environment=env,
                        start=Pose2D(2.5, 2.5, 0), goal=Goal(2.5, 2.5)))
        with pytest.raises(SamplerExhausted):
            sample_random_episodes(lib, 1, seed=0, max_attempts=50)

    def test_count_validation(self):
        with pytest.raises(ValueError):
            sample_random_episodes(make_library(), 0, seed=1)


class TestManifests:
    def test_load_episode_manifest(self, tmp_path):
        save_environment(EnvironmentMap(np.ones((100, 100), dtype=bool), 0.1,
                                        name="flat"), tmp_path / "flat.pgm")
        (tmp_path / "walk.txt").write_text(
            "0 1 0.0 5.0\n25 1 2.0 5.0\n50 1 4.0 5.0\n")
        manifest = {
            "name": "walk_by",
            "environment": "flat",
            "start": {"x": 1.0, "y": 1.0, "heading": 0.5},
            "goal": {"x": 8.0, "y": 8.0, "radius": 0.4},
            "time_budget": 30.0,
            "tick_rate": 25.0,
            "pedestrians": [
                {"track_file": "walk.txt", "frame_rate": 25.0,
                 "time_window": [0.0, 2.0]},
            ],
        }
        (tmp_path / "walk_by.json").write_text(json.dumps(manifest))
        ep = load_episode_manifest(tmp_path / "walk_by.json")
        assert ep.name == "walk_by"
        assert ep.goal.radius == 0.4
        assert len(ep.tracks) == 1
        assert ep.tracks[0].entry_time == 0.0
        assert ep.tracks[0].exit_time == pytest.approx(2.0)
        # 1:1 time; 2 m/s along x
        assert ep.tracks[0].position_at(1.0) == pytest.approx([2.0, 5.0])

    def test_library_round_trip(self, tmp_path):
        lib_dir = tmp_path / "lib"
        (lib_dir / "episodes").mkdir(parents=True)
        (lib_dir / "maps").mkdir()
        save_environment(EnvironmentMap(np.ones((50, 50), dtype=bool), 0.2,
                                        name="m"), lib_dir / "maps" / "m.pgm")
        for i in range(3):
            doc = {"name": f"ep{i}", "environment": "../maps/m",
                   "start": {"x": 1, "y": 1}, "goal": {"x": 8, "y": 8},
                   "pedestrians": []}
            (lib_dir / "episodes" / f"ep{i}.json").write_text(json.dumps(doc))
        lib = load_library(lib_dir)
        assert len(lib) == 3
        assert set(lib.environments) == {"m"}

    def test_missing_library(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_library(tmp_path)

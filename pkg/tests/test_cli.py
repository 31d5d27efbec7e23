import json
import math
import threading
from pathlib import Path

import numpy as np
import pytest

from replaynav.cli import BenchmarkConfig, main
from replaynav.core import EnvironmentMap
from replaynav.ingest import load_episode_manifest, load_library, \
    save_environment

DATA = Path(__file__).resolve().parents[1] / "data" / "crossing_suite"


def small_library(tmp_path, episodes=3, size_m=10.0) -> Path:
    """Tiny open-map library with unobstructed straight runs."""
    root = tmp_path / "lib"
    (root / "episodes").mkdir(parents=True)
    (root / "maps").mkdir()
    n = round(size_m / 0.1)
    grid = np.ones((n, n), dtype=bool)
    grid[0, :] = grid[-1, :] = grid[:, 0] = grid[:, -1] = False
    save_environment(EnvironmentMap(grid, 0.1, name="box"),
                     root / "maps" / "box.pgm")
    for i in range(episodes):
        doc = {
            "name": f"run{i}",
            "environment": "../maps/box",
            "start": {"x": 1.5, "y": 2.0 + i * 2.0, "heading": 0.0},
            "goal": {"x": size_m - 1.5, "y": 2.0 + i * 2.0, "radius": 0.3},
            "time_budget": 30.0,
            "tick_rate": 25.0,
            "pedestrians": [],
        }
        (root / "episodes" / f"run{i}.json").write_text(json.dumps(doc))
    return root


class TestRun:
    def test_baseline_three_episodes(self, tmp_path):
        lib = small_library(tmp_path)
        out = tmp_path / "out"
        rc = main(["run", "--planner", "baseline", "--episodes", str(lib),
                   "--out", str(out), "--no-timing"])
        assert rc == 0
        logs = sorted((out / "logs").glob("*.jsonl"))
        assert len(logs) == 3
        assert (out / "summary.csv").exists()
        assert (out / "meta.json").exists()
        assert (out / "provenance.json").exists()
        meta = json.loads((out / "meta.json").read_text())
        assert meta["successes"] == 3

    def test_same_seed_identical_outputs(self, tmp_path):
        lib = small_library(tmp_path, episodes=2)

        def run(tag):
            out = tmp_path / tag
            rc = main(["run", "--planner", "social-forces",
                       "--episodes", str(lib), "--out", str(out),
                       "--seed", "3", "--no-timing"])
            assert rc == 0
            summary = (out / "summary.csv").read_bytes()
            logs = b"".join(p.read_bytes()
                            for p in sorted((out / "logs").glob("*.jsonl")))
            return summary, logs

        assert run("a") == run("b")

    def test_crossing_suite_with_orca(self, tmp_path):
        out = tmp_path / "orca_out"
        rc = main(["run", "--planner", "orca", "--episodes", str(DATA),
                   "--out", str(out), "--no-timing"])
        assert rc == 0
        meta = json.loads((out / "meta.json").read_text())
        assert meta["episode_count"] == 5

    def test_exit_zero_even_with_failures(self, tmp_path):
        # Baseline plows through the crossing suite, collecting pedestrian
        # collisions; harness integrity is still exit 0.
        out = tmp_path / "base_out"
        rc = main(["run", "--planner", "baseline", "--episodes", str(DATA),
                   "--out", str(out), "--no-timing"])
        assert rc == 0
        meta = json.loads((out / "meta.json").read_text())
        assert meta["total_pedestrian_collisions"] > 0
        assert meta["successes"] < meta["episode_count"]

    def test_invalid_library_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            main(["run", "--planner", "baseline",
                  "--episodes", str(tmp_path / "nope"),
                  "--out", str(tmp_path / "o")])

    def test_async_mode(self, tmp_path):
        lib = small_library(tmp_path, episodes=1)
        out = tmp_path / "async_out"
        rc = main(["run", "--planner", "baseline", "--episodes", str(lib),
                   "--out", str(out), "--mode", "async",
                   "--wall-rate", "500", "--no-timing"])
        assert rc == 0
        meta = json.loads((out / "meta.json").read_text())
        assert meta["episode_count"] == 1

    def test_unix_socket_bind(self, tmp_path):
        lib = small_library(tmp_path, episodes=1)
        out = tmp_path / "unix_out"
        sock_path = tmp_path / "bench.sock"
        rc = main(["run", "--planner", "baseline", "--episodes", str(lib),
                   "--out", str(out), "--bind", f"unix:{sock_path}",
                   "--no-timing"])
        assert rc == 0
        assert (out / "summary.csv").exists()
        assert not sock_path.exists()  # cleaned up after the run


class TestSample:
    def test_manifests_written_and_valid(self, tmp_path):
        lib = small_library(tmp_path)
        out = tmp_path / "sampled"
        rc = main(["sample", "--episodes", str(lib), "--count", "10",
                   "--seed", "1", "--out", str(out)])
        assert rc == 0
        manifests = sorted(out.glob("*.json"))
        assert len(manifests) == 10
        env_cache = {}
        for manifest in manifests:
            doc = json.loads(manifest.read_text())
            doc["environment"] = str(lib / "maps" / doc["environment"])
            rewritten = out / f"resolved_{manifest.name}"
            rewritten.write_text(json.dumps(doc))
            ep = load_episode_manifest(rewritten, env_cache)
            dist = math.hypot(ep.goal.x - ep.start.x, ep.goal.y - ep.start.y)
            assert dist <= 1.2 * 25.0 + 1e-9

    def test_same_seed_identical_manifests(self, tmp_path):
        lib = small_library(tmp_path)

        def run(tag):
            out = tmp_path / tag
            main(["sample", "--episodes", str(lib), "--count", "5",
                  "--seed", "9", "--out", str(out)])
            return [p.read_bytes() for p in sorted(out.glob("*.json"))]

        assert run("s1") == run("s2")

    def test_zero_count_usage_error(self, tmp_path):
        lib = small_library(tmp_path)
        rc = main(["sample", "--episodes", str(lib), "--count", "0",
                   "--seed", "1", "--out", str(tmp_path / "x")])
        assert rc == 2


class TestReportRender:
    def test_report_recomputes_from_logs(self, tmp_path):
        lib = small_library(tmp_path, episodes=1)
        out = tmp_path / "out"
        main(["run", "--planner", "baseline", "--episodes", str(lib),
              "--out", str(out), "--no-timing"])
        re_out = tmp_path / "re"
        rc = main(["report", "--logs", str(out / "logs"), "--out", str(re_out)])
        assert rc == 0
        assert (re_out / "summary.csv").read_text() == \
            (out / "summary.csv").read_text()

    def test_render_writes_frames(self, tmp_path):
        lib = small_library(tmp_path, episodes=1)
        out = tmp_path / "out"
        main(["run", "--planner", "baseline", "--episodes", str(lib),
              "--out", str(out), "--no-timing"])
        frames_out = tmp_path / "frames"
        rc = main(["render", "--logs", str(out / "logs"),
                   "--episodes", str(lib), "--out", str(frames_out),
                   "--stride", "50"])
        assert rc == 0
        pngs = list((frames_out / "run0" / "frames").glob("*.png"))
        assert pngs, "no frames written"

    def test_list(self, tmp_path, capsys):
        lib = small_library(tmp_path, episodes=2)
        rc = main(["list", "--episodes", str(lib)])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "run0" in printed and "run1" in printed


class TestConfig:
    def test_load_and_digest_stable(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"planner": "orca", "seed": 4}))
        a = BenchmarkConfig.load(path)
        b = BenchmarkConfig.load(path)
        assert a.digest() == b.digest()
        assert a.planner == "orca"

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"plannr": "orca"}))
        with pytest.raises(ValueError, match="unknown config keys"):
            BenchmarkConfig.load(path)

    def test_robot_spec_mode_follows_planner(self):
        assert BenchmarkConfig(planner="orca").robot_spec().control_mode \
            == "holonomic"
        assert BenchmarkConfig(planner="baseline").robot_spec().control_mode \
            == "unicycle"

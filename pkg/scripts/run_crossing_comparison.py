#!/usr/bin/env python3
"""Run the bundled planners over the crossing suite and print the
pedestrian-collision ordering (in-process, no sockets)."""
from __future__ import annotations

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from replaynav.engine import run_episode_synchronous
from replaynav.ingest import load_library
from replaynav.metrics import aggregate_meta
from replaynav.planners import PolicySyncClient, make_policy
from replaynav.robot import RobotSpec

PLANNERS = [("social-forces", "holonomic"), ("orca", "holonomic"),
            ("baseline", "unicycle")]


def run_suite(library_path):
    library = load_library(library_path)
    results = {}
    for planner, mode in PLANNERS:
        spec = RobotSpec(control_mode=mode)
        logs = []
        started = time.perf_counter()
        for episode in library.episodes.values():
            client = PolicySyncClient(make_policy(planner))
            logs.append(run_episode_synchronous(episode, client, spec,
                                                capture_timing=False))
        meta = aggregate_meta(logs)
        elapsed = time.perf_counter() - started
        results[planner] = meta
        per_ep = {log.episode_name: log.pedestrian_collision_count()
                  for log in logs}
        kinds = [log.termination.kind.value for log in logs]
        print(f"{planner:14s} collisions={meta.total_pedestrian_collisions:3d} "
              f"success={meta.successes}/{meta.episode_count} "
              f"tuple={meta.failure_tuple_str()} ({elapsed:.1f}s)")
        print(f"  per-episode: {per_ep}")
        print(f"  terminations: {kinds}")
    return results


if __name__ == "__main__":
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parents[1] / "data" / "crossing_suite"
    results = run_suite(root)
    sf = results["social-forces"].total_pedestrian_collisions
    orca = results["orca"].total_pedestrian_collisions
    base = results["baseline"].total_pedestrian_collisions
    ok = sf <= orca <= base
    print(f"ordering social-forces({sf}) <= orca({orca}) <= baseline({base}): "
          f"{'OK' if ok else 'VIOLATED'}")
    sys.exit(0 if ok else 1)

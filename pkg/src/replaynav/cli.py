"""Benchmark harness CLI.

Subcommands: run (serve episodes to a planner or external client),
sample (random reachable episodes), report (recompute metrics from
logs), render (frames from logs), list (show a library). Logs are the
single source of truth: report and render replay them offline.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .clients import run_policy_client
from .engine import EpisodeLog
from .ingest import (
    episode_to_manifest,
    load_library,
    sample_random_episodes,
)
from .metrics import aggregate_meta, compute_episode_metrics
from .planners import make_policy
from .render import FrameSpec, render_episode_frames
from .report import write_reports
from .robot import RobotSpec
from .server import ServerConfig, serve

PLANNER_MODES = {"social-forces": "holonomic", "orca": "holonomic",
                 "baseline": "unicycle"}


@dataclass
class BenchmarkConfig:
    episodes: str = "episodes"
    planner: str = "baseline"  # or "external"
    mode: str = "sync"
    bind: Optional[str] = None  # default: 127.0.0.1:6400 (external) or
    #                             an ephemeral loopback port (bundled)
    out: str = "out"
    seed: int = 0
    wall_rate: float = 25.0
    accept_timeout: Optional[float] = None
    capture_timing: bool = True
    frames: bool = False
    robot: dict = field(default_factory=dict)
    planner_params: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "BenchmarkConfig":
        doc = json.loads(Path(path).read_text())
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def digest(self) -> str:
        canonical = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def robot_spec(self) -> RobotSpec:
        fields = dict(self.robot)
        if self.planner in PLANNER_MODES and "control_mode" not in fields:
            fields["control_mode"] = PLANNER_MODES[self.planner]
        return RobotSpec(**fields)


def _parse_bind(bind: str) -> tuple[str, int] | str:
    """HOST:PORT for TCP, or `unix:PATH` / a filesystem path for a
    local-domain socket."""
    if bind.startswith("unix:"):
        return bind[len("unix:"):]
    if "/" in bind:
        return bind
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind must be HOST:PORT or unix:PATH, got {bind!r}")
    return host, int(port)


def _write_provenance(config: BenchmarkConfig, out_dir: Path) -> None:
    doc = {
        "tool": "replaynav",
        "version": __version__,
        "python": sys.version.split()[0],
        "config": asdict(config),
        "config_digest": config.digest(),
        "seed": config.seed,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    (out_dir / "provenance.json").write_text(json.dumps(doc, indent=2,
                                                        sort_keys=True))


def cmd_run(config: BenchmarkConfig) -> int:
    library = load_library(config.episodes)
    spec = config.robot_spec()
    if config.bind is not None:
        bind_target = _parse_bind(config.bind)
    elif config.planner == "external":
        bind_target = ("127.0.0.1", 6400)
    else:
        bind_target = ("127.0.0.1", 0)  # bundled client: any free port
    server_config = ServerConfig(
        mode=config.mode,
        wall_rate=config.wall_rate,
        accept_timeout=config.accept_timeout,
        capture_timing=config.capture_timing,
    )
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_provenance(config, out_dir)

    ready = threading.Event()
    bound: list = []
    client_error: list = []
    client_thread = None
    if config.planner != "external":
        def run_client():
            ready.wait()
            address = bind_target if isinstance(bind_target, str) \
                else ("127.0.0.1", bound[0])
            try:
                run_policy_client(
                    address,
                    lambda: make_policy(config.planner, **config.planner_params))
            except Exception as exc:
                client_error.append(exc)

        client_thread = threading.Thread(target=run_client, daemon=True)
        client_thread.start()
    else:
        print(f"waiting for external client on {bind_target} "
              f"(timeout {config.accept_timeout})", file=sys.stderr)

    logs = serve(library, bind_target, spec, server_config,
                 ready=ready, bound_port=bound)
    if client_thread is not None:
        client_thread.join(10.0)
        if client_error:
            raise client_error[0]

    logs_dir = out_dir / "logs"
    logs_dir.mkdir(exist_ok=True)
    for log in logs:
        (logs_dir / f"{log.episode_name}.jsonl").write_text(log.to_jsonl())

    episode_metrics = [compute_episode_metrics(log) for log in logs]
    meta = aggregate_meta(logs)
    write_reports(episode_metrics, meta, out_dir)
    if config.frames:
        for log in logs:
            env = library.environments[log.environment_name]
            render_episode_frames(log, env, FrameSpec(),
                                  out_dir / log.episode_name / "frames")
    print(f"{len(logs)} episode(s) -> {out_dir}  "
          f"success {meta.successes}/{meta.episode_count}  "
          f"failures {meta.failure_tuple_str()}")
    return 0


def cmd_sample(config: BenchmarkConfig, count: int, out: Path) -> int:
    library = load_library(config.episodes)
    spec = config.robot_spec()
    episodes = sample_random_episodes(library, count, config.seed,
                                      v_max=spec.v_max)
    out.mkdir(parents=True, exist_ok=True)
    source_manifests = _source_manifests(Path(config.episodes))
    for ep in episodes:
        doc = episode_to_manifest(ep, source_manifests.get(ep.environment.name))
        (out / f"{ep.name}.json").write_text(json.dumps(doc, indent=2,
                                                        sort_keys=True))
    print(f"wrote {len(episodes)} manifests -> {out}")
    return 0


def _source_manifests(library_path: Path) -> dict[str, dict]:
    """Environment name -> one source manifest doc (for track sections)."""
    manifest_dir = library_path / "episodes"
    if not manifest_dir.is_dir():
        manifest_dir = library_path
    out: dict[str, dict] = {}
    for path in sorted(manifest_dir.glob("*.json")):
        doc = json.loads(path.read_text())
        env = Path(doc.get("environment", "")).stem
        out.setdefault(env, doc)
    return out


def cmd_report(logs_dir: Path, out: Path) -> int:
    logs = [EpisodeLog.from_jsonl(p.read_text())
            for p in sorted(logs_dir.glob("*.jsonl"))]
    if not logs:
        print(f"no .jsonl logs under {logs_dir}", file=sys.stderr)
        return 1
    write_reports([compute_episode_metrics(log) for log in logs],
                  aggregate_meta(logs), out)
    print(f"reports for {len(logs)} episode(s) -> {out}")
    return 0


def cmd_render(logs_dir: Path, episodes_path: Path, out: Path,
               stride: int, only: Optional[str]) -> int:
    library = load_library(episodes_path)
    count = 0
    for path in sorted(logs_dir.glob("*.jsonl")):
        log = EpisodeLog.from_jsonl(path.read_text())
        if only is not None and log.episode_name != only:
            continue
        env = library.environments[log.environment_name]
        frames = render_episode_frames(
            log, env, FrameSpec(), out / log.episode_name / "frames",
            stride=stride)
        count += len(frames)
    print(f"wrote {count} frame(s) -> {out}")
    return 0


def cmd_list(episodes_path: Path) -> int:
    library = load_library(episodes_path)
    for name, ep in library.episodes.items():
        print(f"{name}: env={ep.environment.name} "
              f"peds={len(ep.tracks)} budget={ep.time_budget}s "
              f"tick_rate={ep.tick_rate}Hz")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replaynav",
        description="Replay-based social navigation benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--episodes", type=Path, help="episode library path")
        p.add_argument("--seed", type=int)

    run_p = sub.add_parser("run", help="serve episodes and score a planner")
    add_common(run_p)
    run_p.add_argument("--planner",
                       choices=[*PLANNER_MODES, "external"])
    run_p.add_argument("--mode", choices=["sync", "async"])
    run_p.add_argument("--bind", help="HOST:PORT (default 127.0.0.1:6400)")
    run_p.add_argument("--out", type=Path)
    run_p.add_argument("--wall-rate", type=float, dest="wall_rate")
    run_p.add_argument("--accept-timeout", type=float, dest="accept_timeout")
    run_p.add_argument("--no-timing", action="store_true",
                       help="record planning waits as zero for "
                            "bit-reproducible outputs")
    run_p.add_argument("--frames", action="store_true",
                       help="render schematic frames for every episode")

    sample_p = sub.add_parser("sample", help="sample random episodes")
    add_common(sample_p)
    sample_p.add_argument("--count", type=int, required=True)
    sample_p.add_argument("--out", type=Path, required=True)

    report_p = sub.add_parser("report", help="recompute metrics from logs")
    report_p.add_argument("--logs", type=Path, required=True)
    report_p.add_argument("--out", type=Path, required=True)

    render_p = sub.add_parser("render", help="render frames from logs")
    render_p.add_argument("--logs", type=Path, required=True)
    render_p.add_argument("--episodes", type=Path, required=True)
    render_p.add_argument("--out", type=Path, required=True)
    render_p.add_argument("--stride", type=int, default=1)
    render_p.add_argument("--episode", help="render only this episode")

    list_p = sub.add_parser("list", help="list a library's episodes")
    list_p.add_argument("--episodes", type=Path, required=True)
    return parser


def _config_from_args(args) -> BenchmarkConfig:
    config = (BenchmarkConfig.load(args.config) if args.config
              else BenchmarkConfig())
    overrides = {
        "episodes": getattr(args, "episodes", None),
        "planner": getattr(args, "planner", None),
        "mode": getattr(args, "mode", None),
        "bind": getattr(args, "bind", None),
        "out": getattr(args, "out", None),
        "seed": getattr(args, "seed", None),
        "wall_rate": getattr(args, "wall_rate", None),
        "accept_timeout": getattr(args, "accept_timeout", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, str(value) if key in
                    ("episodes", "out", "bind") else value)
    if getattr(args, "no_timing", False):
        config.capture_timing = False
    if getattr(args, "frames", False):
        config.frames = True
    return config


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(_config_from_args(args))
    if args.command == "sample":
        if args.count < 1:
            print("--count must be >= 1", file=sys.stderr)
            return 2
        return cmd_sample(_config_from_args(args), args.count, args.out)
    if args.command == "report":
        return cmd_report(args.logs, args.out)
    if args.command == "render":
        return cmd_render(args.logs, args.episodes, args.out, args.stride,
                          args.episode)
    if args.command == "list":
        return cmd_list(args.episodes)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())

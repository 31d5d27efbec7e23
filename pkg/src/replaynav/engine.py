"""Tick loop: replay pedestrians, apply robot commands, detect collisions,
terminate and classify episodes.

Pedestrian motion is pure replay and therefore identical across runs of
the same episode, whatever the robot does. A pedestrian collision never
ends an episode (it is counted per contact event); an environment
collision always does.
"""
from __future__ import annotations

import json
import math
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Protocol

import numpy as np

from .core import AgentState, EnvironmentMap, Episode, Pose2D, distance_to_goal
from .robot import (
    HolonomicCommand,
    RobotSpec,
    UnicycleCommand,
    VelocityCommand,
    apply_command,
    stop_command,
)

ROBOT_ID = "robot"


class TerminationKind(str, Enum):
    COMPLETION = "completion"
    TIMEOUT = "timeout"
    ENV_COLLISION = "env_collision"


@dataclass(frozen=True)
class Termination:
    kind: TerminationKind
    success: bool
    pedestrian_collisions: int

    def __post_init__(self):
        expected = (self.kind is TerminationKind.COMPLETION
                    and self.pedestrian_collisions == 0)
        if self.success != expected:
            raise ValueError("success flag inconsistent with termination kind "
                             "and collision count")


@dataclass(frozen=True)
class SimState:
    """Immutable per-tick world snapshot."""

    t: float
    tick: int
    robot: AgentState
    pedestrians: tuple[AgentState, ...]
    termination: Optional[Termination] = None


@dataclass(frozen=True)
class CollisionEvent:
    """One contiguous overlap interval with a pedestrian or the map."""

    kind: str  # "pedestrian" | "environment"
    other_id: int | str | None
    start_tick: int
    end_tick: int

    def __post_init__(self):
        if self.start_tick > self.end_tick:
            raise ValueError("event interval reversed")


@dataclass
class TickRecord:
    tick: int
    t: float
    robot: AgentState
    pedestrians: tuple[AgentState, ...]
    command: Optional[VelocityCommand]
    wait_s: float = 0.0


@dataclass
class EpisodeLog:
    """Full recorded history of one run; the single source of truth for
    metrics and rendering."""

    episode_name: str
    tick_rate: float
    robot_spec: RobotSpec
    goal: tuple[float, float]
    goal_radius: float
    environment_name: str
    records: list[TickRecord] = field(default_factory=list)
    collision_events: list[CollisionEvent] = field(default_factory=list)
    termination: Optional[Termination] = None
    transport_failure: bool = False

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    def positions(self) -> np.ndarray:
        return np.array([[r.robot.pose.x, r.robot.pose.y] for r in self.records])

    def pedestrian_collision_count(self) -> int:
        return sum(1 for e in self.collision_events if e.kind == "pedestrian")

    def total_wait(self) -> float:
        return sum(r.wait_s for r in self.records)

    def steps_waited(self) -> int:
        # Tick 0 is the initial state; no command was awaited for it.
        return max(0, len(self.records) - 1)

    # ---- serialization (JSON lines: header, ticks, summary) ----

    def to_jsonl(self) -> str:
        lines = [_dump(self._header_doc())]
        lines += [_dump(record_to_doc(r)) for r in self.records]
        lines.append(_dump(self._summary_doc()))
        return "\n".join(lines) + "\n"

    def _header_doc(self) -> dict:
        spec = self.robot_spec
        return {
            "kind": "header",
            "episode": self.episode_name,
            "environment": self.environment_name,
            "tick_rate": self.tick_rate,
            "goal": list(self.goal),
            "goal_radius": self.goal_radius,
            "robot_spec": {
                "radius": spec.radius, "v_max": spec.v_max,
                "omega_max": spec.omega_max, "a_max": spec.a_max,
                "control_mode": spec.control_mode,
            },
        }

    def _summary_doc(self) -> dict:
        term = None
        if self.termination is not None:
            term = {
                "kind": self.termination.kind.value,
                "success": self.termination.success,
                "pedestrian_collisions": self.termination.pedestrian_collisions,
            }
        return {
            "kind": "summary",
            "termination": term,
            "transport_failure": self.transport_failure,
            "collision_events": [
                {"kind": e.kind, "other_id": e.other_id,
                 "start_tick": e.start_tick, "end_tick": e.end_tick}
                for e in self.collision_events
            ],
            "total_wait_s": self.total_wait(),
            "ticks": len(self.records),
        }

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        header = None
        records: list[TickRecord] = []
        summary = None
        for line in text.splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc["kind"] == "header":
                header = doc
            elif doc["kind"] == "tick":
                records.append(record_from_doc(doc))
            elif doc["kind"] == "summary":
                summary = doc
            else:
                raise ValueError(f"unknown log record kind: {doc['kind']!r}")
        if header is None or summary is None:
            raise ValueError("log missing header or summary record")
        spec_doc = header["robot_spec"]
        log = cls(
            episode_name=header["episode"],
            tick_rate=header["tick_rate"],
            robot_spec=RobotSpec(**spec_doc),
            goal=tuple(header["goal"]),
            goal_radius=header["goal_radius"],
            environment_name=header["environment"],
            records=records,
        )
        log.transport_failure = summary.get("transport_failure", False)
        log.collision_events = [
            CollisionEvent(kind=e["kind"], other_id=e["other_id"],
                           start_tick=e["start_tick"], end_tick=e["end_tick"])
            for e in summary["collision_events"]
        ]
        if summary["termination"] is not None:
            t = summary["termination"]
            log.termination = Termination(
                kind=TerminationKind(t["kind"]), success=t["success"],
                pedestrian_collisions=t["pedestrian_collisions"])
        return log


def _dump(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def agent_to_doc(a: AgentState) -> dict:
    return {"id": a.id, "x": a.pose.x, "y": a.pose.y,
            "heading": a.pose.heading, "vx": a.velocity[0],
            "vy": a.velocity[1], "radius": a.radius}


def agent_from_doc(doc: dict) -> AgentState:
    return AgentState(id=doc["id"],
                      pose=Pose2D(doc["x"], doc["y"], doc["heading"]),
                      velocity=(doc["vx"], doc["vy"]), radius=doc["radius"])


def command_to_doc(cmd: Optional[VelocityCommand]) -> Optional[dict]:
    if cmd is None:
        return None
    if isinstance(cmd, UnicycleCommand):
        return {"kind": "unicycle", "v": cmd.v, "omega": cmd.omega}
    return {"kind": "holonomic", "vx": cmd.vx, "vy": cmd.vy}


def command_from_doc(doc: Optional[dict]) -> Optional[VelocityCommand]:
    if doc is None:
        return None
    if doc["kind"] == "unicycle":
        return UnicycleCommand(doc["v"], doc["omega"])
    if doc["kind"] == "holonomic":
        return HolonomicCommand(doc["vx"], doc["vy"])
    raise ValueError(f"unknown command kind: {doc['kind']!r}")


def record_to_doc(r: TickRecord) -> dict:
    return {
        "kind": "tick", "tick": r.tick, "t": r.t,
        "robot": agent_to_doc(r.robot),
        "pedestrians": [agent_to_doc(p) for p in r.pedestrians],
        "command": command_to_doc(r.command),
        "wait_s": r.wait_s,
    }


def record_from_doc(doc: dict) -> TickRecord:
    return TickRecord(
        tick=doc["tick"], t=doc["t"],
        robot=agent_from_doc(doc["robot"]),
        pedestrians=tuple(agent_from_doc(p) for p in doc["pedestrians"]),
        command=command_from_doc(doc["command"]),
        wait_s=doc.get("wait_s", 0.0),
    )


# ---------------------------------------------------------------------------
# collision detection


def detect_collisions(robot: AgentState, pedestrians: Iterable[AgentState],
                      env: EnvironmentMap) -> list[tuple[str, int | str | None]]:
    """Disc-overlap contacts at one tick.

    Pedestrian contact: center distance strictly below the radii sum.
    Environment contact: any occupied cell (or out-of-map space, which
    counts as obstacle) within the robot radius of its center.
    """
    contacts: list[tuple[str, int | str | None]] = []
    rx, ry = robot.pose.x, robot.pose.y
    for ped in pedestrians:
        d = math.hypot(ped.pose.x - rx, ped.pose.y - ry)
        if d < robot.radius + ped.radius:
            contacts.append(("pedestrian", ped.id))
    if _environment_contact(robot, env):
        contacts.append(("environment", None))
    return contacts


def _environment_contact(robot: AgentState, env: EnvironmentMap) -> bool:
    r = robot.radius
    res = env.resolution
    h, w = env.traversable.shape
    x0, y0 = env.origin
    # Disc poking outside the map counts as hitting the boundary.
    if (robot.pose.x - r < x0 or robot.pose.y - r < y0
            or robot.pose.x + r > x0 + w * res
            or robot.pose.y + r > y0 + h * res):
        return True
    ix_lo = max(0, math.floor((robot.pose.x - r - x0) / res))
    ix_hi = min(w - 1, math.floor((robot.pose.x + r - x0) / res))
    iy_lo = max(0, math.floor((robot.pose.y - r - y0) / res))
    iy_hi = min(h - 1, math.floor((robot.pose.y + r - y0) / res))
    for iy in range(iy_lo, iy_hi + 1):
        for ix in range(ix_lo, ix_hi + 1):
            if env.traversable[iy, ix]:
                continue
            # Nearest point of the cell square to the robot center.
            cx = min(max(robot.pose.x, x0 + ix * res), x0 + (ix + 1) * res)
            cy = min(max(robot.pose.y, y0 + iy * res), y0 + (iy + 1) * res)
            if math.hypot(robot.pose.x - cx, robot.pose.y - cy) < r:
                return True
    return False


def coalesce_collision_events(
        per_tick_contacts: Iterable[tuple[int, list[tuple[str, int | str | None]]]],
) -> list[CollisionEvent]:
    """Merge contiguous per-tick contacts into per-interval events.

    Ticks must arrive in increasing order. Each (kind, other id) pair
    opens a new event whenever its previous overlap interval was broken.
    """
    open_events: dict[tuple[str, int | str | None], list[int]] = {}
    done: list[CollisionEvent] = []
    for tick, contacts in per_tick_contacts:
        current = set(contacts)
        for key in list(open_events):
            if key not in current:
                start, end = open_events.pop(key)
                done.append(CollisionEvent(key[0], key[1], start, end))
        for key in current:
            if key in open_events:
                open_events[key][1] = tick
            else:
                open_events[key] = [tick, tick]
    for key, (start, end) in open_events.items():
        done.append(CollisionEvent(key[0], key[1], start, end))
    done.sort(key=lambda e: (e.start_tick, str(e.other_id)))
    return done


# ---------------------------------------------------------------------------
# simulator


class EpisodeTerminated(RuntimeError):
    """advance_tick called after the episode already ended."""


class Simulator:
    """Stateful tick advancer for one episode."""

    def __init__(self, episode: Episode, spec: RobotSpec):
        self.episode = episode
        self.spec = spec
        robot = AgentState(
            id=ROBOT_ID, pose=episode.start, velocity=(0.0, 0.0),
            radius=spec.radius)
        self.state = SimState(
            t=0.0, tick=0, robot=robot,
            pedestrians=self._pedestrians_at(0.0))
        self._contact_history: list[tuple[int, list]] = []
        self.log = EpisodeLog(
            episode_name=episode.name,
            tick_rate=episode.tick_rate,
            robot_spec=spec,
            goal=(episode.goal.x, episode.goal.y),
            goal_radius=episode.goal.radius,
            environment_name=episode.environment.name,
        )
        self.log.records.append(TickRecord(
            tick=0, t=0.0, robot=robot, pedestrians=self.state.pedestrians,
            command=None))

    def _pedestrians_at(self, t: float) -> tuple[AgentState, ...]:
        out = []
        for track in self.episode.tracks:
            if not track.active_at(t):
                continue
            pos = track.position_at(t)
            vel = track.velocity_at(t)
            heading = math.atan2(vel[1], vel[0]) if (vel[0] or vel[1]) else 0.0
            out.append(AgentState(
                id=track.id,
                pose=Pose2D(float(pos[0]), float(pos[1]), heading),
                velocity=(float(vel[0]), float(vel[1])),
                radius=self.episode.ped_radius))
        return tuple(out)

    @property
    def terminated(self) -> bool:
        return self.state.termination is not None

    def advance_tick(self, command: VelocityCommand,
                     wait_s: float = 0.0) -> SimState:
        """Apply one robot command and advance the world by one tick."""
        if self.terminated:
            raise EpisodeTerminated(
                f"episode {self.episode.name} already terminated")
        ep = self.episode
        robot = apply_command(self.state.robot, command, self.spec, ep.dt)
        tick = self.state.tick + 1
        t = tick / ep.tick_rate
        pedestrians = self._pedestrians_at(t)

        contacts = detect_collisions(robot, pedestrians, ep.environment)
        self._contact_history.append((tick, contacts))
        env_hit = any(kind == "environment" for kind, _ in contacts)

        termination = None
        if distance_to_goal(robot, ep.goal) <= ep.goal.radius:
            termination = TerminationKind.COMPLETION
        elif env_hit:
            termination = TerminationKind.ENV_COLLISION
        elif tick > ep.budget_ticks:
            termination = TerminationKind.TIMEOUT

        term_obj = None
        if termination is not None:
            events = coalesce_collision_events(self._contact_history)
            ped_events = sum(1 for e in events if e.kind == "pedestrian")
            term_obj = Termination(
                kind=termination,
                success=(termination is TerminationKind.COMPLETION
                         and ped_events == 0),
                pedestrian_collisions=ped_events)
            self.log.collision_events = events
            self.log.termination = term_obj

        self.state = SimState(t=t, tick=tick, robot=robot,
                              pedestrians=pedestrians, termination=term_obj)
        self.log.records.append(TickRecord(
            tick=tick, t=t, robot=robot, pedestrians=pedestrians,
            command=command, wait_s=wait_s))
        return self.state

    def close_log(self, kind: TerminationKind = TerminationKind.TIMEOUT,
                  transport_failure: bool = False) -> EpisodeLog:
        """Finalize the log, classifying an aborted run if needed."""
        if self.log.termination is None:
            events = coalesce_collision_events(self._contact_history)
            ped_events = sum(1 for e in events if e.kind == "pedestrian")
            self.log.collision_events = events
            self.log.termination = Termination(
                kind=kind,
                success=False,
                pedestrian_collisions=ped_events)
        self.log.transport_failure = transport_failure
        return self.log


# ---------------------------------------------------------------------------
# episode runners


class ClientDisconnected(RuntimeError):
    """Transport failed or the client went silent past its deadline."""


class SyncClient(Protocol):
    """Sense-plan-act client driven one command per tick."""

    def begin_episode(self, episode: Episode, spec: RobotSpec) -> None: ...

    def decide(self, state: SimState) -> VelocityCommand: ...

    def end_episode(self, log: EpisodeLog) -> None: ...


def run_episode_synchronous(episode: Episode, client: SyncClient,
                            spec: RobotSpec,
                            capture_timing: bool = True) -> EpisodeLog:
    """Lock-step run: one client decision consumed per simulator tick.

    Sim time does not advance while the client thinks; with
    ``capture_timing`` the wall-clock time blocked on each decision is
    recorded per tick (and is the only non-deterministic log content).
    """
    sim = Simulator(episode, spec)
    client.begin_episode(episode, spec)
    while not sim.terminated:
        before = time.perf_counter() if capture_timing else 0.0
        try:
            command = client.decide(sim.state)
        except ClientDisconnected:
            log = sim.close_log(TerminationKind.TIMEOUT, transport_failure=True)
            client.end_episode(log)
            return log
        wait = (time.perf_counter() - before) if capture_timing else 0.0
        sim.advance_tick(command, wait_s=wait)
    log = sim.close_log()
    client.end_episode(log)
    return log


class CommandMailbox:
    """Single-slot latest-wins command store shared between the receive
    path and the tick thread. The last command is sticky: a slow client's
    stale command keeps being applied each tick."""

    def __init__(self):
        self._lock = threading.Lock()
        self._cmd: Optional[VelocityCommand] = None

    def put(self, command: VelocityCommand) -> None:
        with self._lock:
            self._cmd = command

    def latest(self) -> Optional[VelocityCommand]:
        with self._lock:
            return self._cmd


class AsyncEpisodeRunner:
    """Wall-clock paced tick loop reading from a command mailbox.

    Commands take effect starting the tick after receipt: the receive
    path only writes the mailbox, and the tick thread samples it at every
    tick boundary. ``pacer`` is called with the upcoming tick index
    before each advance; the default sleeps to hold the wall rate, tests
    inject deterministic schedules.
    """

    def __init__(self, episode: Episode, spec: RobotSpec, wall_rate: float,
                 mailbox: Optional[CommandMailbox] = None,
                 pacer: Optional[Callable[[int], None]] = None):
        if wall_rate <= 0:
            raise ValueError(f"wall rate must be positive, got {wall_rate}")
        self.sim = Simulator(episode, spec)
        self.mailbox = mailbox if mailbox is not None else CommandMailbox()
        self.wall_rate = wall_rate
        self._pacer = pacer if pacer is not None else self._sleep_pacer()
        self._spec = spec
        self._lock = threading.Lock()
        self._abort = threading.Event()

    def _sleep_pacer(self) -> Callable[[int], None]:
        period = 1.0 / self.wall_rate
        start = time.perf_counter()

        def wait(tick: int) -> None:
            deadline = start + tick * period
            now = time.perf_counter()
            if deadline > now:
                time.sleep(deadline - now)

        return wait

    def snapshot(self) -> SimState:
        with self._lock:
            return self.sim.state

    def abort(self) -> None:
        self._abort.set()

    def run(self) -> EpisodeLog:
        while not self.sim.terminated:
            if self._abort.is_set():
                return self.sim.close_log(TerminationKind.TIMEOUT,
                                          transport_failure=True)
            self._pacer(self.sim.state.tick + 1)
            command = self.mailbox.latest()
            if command is None:
                command = stop_command(self._spec)
            with self._lock:
                self.sim.advance_tick(command)
        return self.sim.close_log()


def run_episode_asynchronous(episode: Episode, client, spec: RobotSpec,
                             wall_rate: float,
                             pacer: Optional[Callable[[int], None]] = None,
                             ) -> EpisodeLog:
    """Run with the simulator free-running at ``wall_rate``.

    ``client`` gets the runner before the loop starts and may feed the
    mailbox from its own thread (socket receive loop or test driver).
    """
    runner = AsyncEpisodeRunner(episode, spec, wall_rate, pacer=pacer)
    client.begin_episode(episode, spec, runner)
    try:
        log = runner.run()
    except ClientDisconnected:
        log = runner.sim.close_log(TerminationKind.TIMEOUT,
                                   transport_failure=True)
    client.end_episode(log)
    return log

"""Benchmark server: accepts one client and serves episodes sequentially.

Synchronous flow per tick: the client sends sense, the server replies
with the world state, the client sends act, and the simulator advances.
The sense that follows a terminal tick is answered with episode_end.
Protocol violations get an error reply and leave the connection (and the
expected message) unchanged. In asynchronous mode the receive loop feeds
a latest-wins mailbox while the simulator free-runs at the wall rate.
"""
from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .core import Episode
from .engine import (
    AsyncEpisodeRunner,
    ClientDisconnected,
    EpisodeLog,
    SimState,
    Simulator,
    run_episode_synchronous,
)
from .ingest import EpisodeLibrary
from .metrics import compute_episode_metrics
from .protocol import (
    PROTOCOL_VERSION,
    LineTransport,
    Message,
    ProtocolError,
    ReceiveTimeout,
    TransportClosed,
    environment_ref,
    map_message,
    message,
    parse_world_state,
    termination_to_doc,
    world_state_message,
)
from .robot import RobotSpec, VelocityCommand, position_to_velocity, \
    stop_command
from .engine import command_from_doc


@dataclass
class ServerConfig:
    mode: str = "sync"  # "sync" | "async"
    wall_rate: float = 25.0
    recv_deadline: float = 120.0
    accept_timeout: Optional[float] = None
    capture_timing: bool = True

    def __post_init__(self):
        if self.mode not in ("sync", "async"):
            raise ValueError(f"unknown mode: {self.mode!r}")
        if self.wall_rate <= 0:
            raise ValueError("wall rate must be positive")


class _ClientLeft(Exception):
    """Client sent bye; stop serving further episodes."""


def episode_start_message(episode: Episode, spec: RobotSpec) -> Message:
    return message(
        "episode_start",
        name=episode.name,
        environment=environment_ref(episode.environment),
        start={"x": episode.start.x, "y": episode.start.y,
               "heading": episode.start.heading},
        goal={"x": episode.goal.x, "y": episode.goal.y,
              "radius": episode.goal.radius},
        time_budget=episode.time_budget,
        tick_rate=episode.tick_rate,
        robot={"radius": spec.radius, "v_max": spec.v_max,
               "omega_max": spec.omega_max, "a_max": spec.a_max,
               "control_mode": spec.control_mode},
    )


def _episode_meta(episode: Episode) -> dict:
    return {
        "name": episode.name,
        "environment": episode.environment.name,
        "tick_rate": episode.tick_rate,
        "time_budget": episode.time_budget,
        "pedestrians": len(episode.tracks),
    }


class _Connection:
    """Protocol state shared by the sync and async episode drivers."""

    def __init__(self, transport: LineTransport, library: EpisodeLibrary,
                 spec: RobotSpec):
        self.transport = transport
        self.library = library
        self.spec = spec

    def handshake(self) -> None:
        while True:
            try:
                msg = self.transport.recv()
            except ProtocolError as exc:
                self.transport.send(message("error", reason=str(exc)))
                continue
            if msg.type == "hello":
                break
            self.transport.send(message(
                "error", reason=f"expected hello, got {msg.type}"))
        self.transport.send(message("hello", version=PROTOCOL_VERSION))
        self.transport.send(message(
            "episode_list",
            episodes=[_episode_meta(ep) for ep in self.library.episodes.values()],
        ))

    def reply_map(self, msg: Message) -> None:
        name = msg["environment"]
        env = self.library.environments.get(name)
        if env is None:
            self.transport.send(message(
                "error", reason=f"unknown environment {name!r}"))
        else:
            self.transport.send(map_message(env))

    def parse_command(self, msg: Message, state: SimState,
                      dt: float) -> VelocityCommand:
        doc = msg["command"]
        if not isinstance(doc, dict) or "kind" not in doc:
            raise ProtocolError("act: command must carry a 'kind'")
        if doc["kind"] == "position":
            if "x" not in doc or "y" not in doc:
                raise ProtocolError("act: position command needs x and y")
            return position_to_velocity(
                state.robot.pose, (doc["x"], doc["y"]), dt, self.spec)
        try:
            return command_from_doc(doc)
        except (KeyError, ValueError) as exc:
            raise ProtocolError(f"act: bad command: {exc}") from None


class _SyncSocketClient:
    """Adapter exposing the socket peer as an engine SyncClient."""

    def __init__(self, conn: _Connection, episode: Episode):
        self.conn = conn
        self.episode = episode
        self.client_left = False

    def begin_episode(self, episode, spec) -> None:
        self.conn.transport.send(episode_start_message(episode, spec))

    def _recv_expect(self, expected: str, state: Optional[SimState]):
        """Read until a message of the expected type arrives, answering
        side-channel requests and reporting violations as errors."""
        transport = self.conn.transport
        while True:
            try:
                msg = transport.recv()
            except ProtocolError as exc:
                transport.send(message("error", reason=str(exc)))
                continue
            except (TransportClosed, ReceiveTimeout) as exc:
                raise ClientDisconnected(str(exc)) from exc
            if msg.type == expected:
                return msg
            if msg.type == "get_map":
                self.conn.reply_map(msg)
            elif msg.type == "bye":
                self.client_left = True
                raise ClientDisconnected("client sent bye")
            elif msg.type == "act" and expected == "sense":
                transport.send(message(
                    "error",
                    reason="act before sense: one sense/act pair per tick"))
            elif msg.type == "sense" and expected == "act" and state is not None:
                # Pure read: repeat the current state.
                transport.send(world_state_message(state))
            else:
                transport.send(message(
                    "error", reason=f"expected {expected}, got {msg.type}"))

    def decide(self, state: SimState) -> VelocityCommand:
        self._recv_expect("sense", None)
        self.conn.transport.send(world_state_message(state))
        while True:
            msg = self._recv_expect("act", state)
            try:
                return self.conn.parse_command(msg, state, self.episode.dt)
            except ProtocolError as exc:
                self.conn.transport.send(message("error", reason=str(exc)))

    def end_episode(self, log: EpisodeLog) -> None:
        # Consume the sense that trails the terminal tick, then report.
        if self.client_left:
            return
        try:
            self._recv_expect("sense", None)
            self.conn.transport.send(_episode_end_message(log))
        except ClientDisconnected:
            self.client_left = True


def _episode_end_message(log: EpisodeLog) -> Message:
    metrics = compute_episode_metrics(log).to_doc()
    return message(
        "episode_end",
        name=log.episode_name,
        termination=termination_to_doc(log.termination),
        metrics=metrics,
    )


def _run_async_episode(conn: _Connection, episode: Episode, spec: RobotSpec,
                       config: ServerConfig) -> EpisodeLog:
    conn.transport.send(episode_start_message(episode, spec))
    runner = AsyncEpisodeRunner(episode, spec, config.wall_rate)
    done = threading.Event()
    result: dict = {}

    def tick_loop():
        try:
            result["log"] = runner.run()
        finally:
            done.set()

    thread = threading.Thread(target=tick_loop, name="tick-loop", daemon=True)
    thread.start()

    transport = conn.transport
    transport.sock.settimeout(0.05)  # poll so episode end is noticed
    client_left = False
    deadline = time.monotonic() + config.recv_deadline
    try:
        while not done.is_set():
            try:
                msg = transport.recv()
            except ReceiveTimeout:
                if time.monotonic() > deadline:
                    runner.abort()
                    break
                continue
            except (TransportClosed, ProtocolError) as exc:
                if isinstance(exc, ProtocolError):
                    transport.send(message("error", reason=str(exc)))
                    continue
                runner.abort()
                client_left = True
                break
            deadline = time.monotonic() + config.recv_deadline
            if msg.type == "sense":
                transport.send(world_state_message(runner.snapshot()))
            elif msg.type == "act":
                try:
                    cmd = conn.parse_command(msg, runner.snapshot(), episode.dt)
                    runner.mailbox.put(cmd)
                except ProtocolError as exc:
                    transport.send(message("error", reason=str(exc)))
            elif msg.type == "get_map":
                conn.reply_map(msg)
            elif msg.type == "bye":
                runner.abort()
                client_left = True
                break
            else:
                transport.send(message(
                    "error", reason=f"unexpected {msg.type} in async mode"))
    finally:
        thread.join()
        transport.sock.settimeout(config.recv_deadline)

    log = result.get("log") or runner.sim.close_log(transport_failure=True)
    if not client_left:
        try:
            _drain_terminal_sense(transport, log)
        except ClientDisconnected:
            client_left = True
    if client_left:
        raise _ClientLeft(log)
    return log


def _drain_terminal_sense(transport: LineTransport, log: EpisodeLog) -> None:
    while True:
        try:
            msg = transport.recv()
        except ProtocolError as exc:
            transport.send(message("error", reason=str(exc)))
            continue
        except (TransportClosed, ReceiveTimeout) as exc:
            raise ClientDisconnected(str(exc)) from exc
        if msg.type == "sense":
            transport.send(_episode_end_message(log))
            return
        if msg.type == "bye":
            raise ClientDisconnected("client sent bye")
        if msg.type == "act":
            continue  # stale fire-and-forget act for a finished episode
        transport.send(message(
            "error", reason=f"expected sense, got {msg.type}"))


def serve_connection(transport: LineTransport, library: EpisodeLibrary,
                     spec: RobotSpec, config: ServerConfig) -> list[EpisodeLog]:
    """Drive one client through every episode; returns the logs."""
    conn = _Connection(transport, library, spec)
    conn.handshake()
    logs: list[EpisodeLog] = []
    for episode in library.episodes.values():
        if config.mode == "sync":
            client = _SyncSocketClient(conn, episode)
            log = run_episode_synchronous(
                episode, client, spec, capture_timing=config.capture_timing)
            logs.append(log)
            if client.client_left:
                return logs
        else:
            try:
                log = _run_async_episode(conn, episode, spec, config)
                logs.append(log)
            except _ClientLeft as stop:
                logs.append(stop.args[0])
                return logs
    try:
        transport.send(message("bye"))
    except TransportClosed:
        pass
    return logs


def serve(library: EpisodeLibrary, bind: tuple[str, int] | str,
          spec: RobotSpec, config: Optional[ServerConfig] = None,
          ready: Optional[threading.Event] = None,
          bound_port: Optional[list] = None) -> list[EpisodeLog]:
    """Listen, accept one client, serve the whole library.

    ``bind`` is a (host, port) pair or a local-domain socket path.
    ``ready`` is set once the socket is listening (port in
    ``bound_port``), letting callers start a client without racing the
    bind.
    """
    config = config or ServerConfig()
    unix_path = bind if isinstance(bind, str) else None
    if unix_path is not None:
        import os

        if os.path.exists(unix_path):
            os.unlink(unix_path)
        listener = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    else:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        listener.bind(bind)
        listener.listen(1)
        if bound_port is not None and unix_path is None:
            bound_port.append(listener.getsockname()[1])
        if ready is not None:
            ready.set()
        if config.accept_timeout is not None:
            listener.settimeout(config.accept_timeout)
        try:
            sock, _addr = listener.accept()
        except socket.timeout:
            raise TimeoutError(
                f"no client connected within {config.accept_timeout}s") from None
        transport = LineTransport(sock, config.recv_deadline)
        try:
            return serve_connection(transport, library, spec, config)
        finally:
            transport.close()
    finally:
        listener.close()
        if unix_path is not None:
            import os

            try:
                os.unlink(unix_path)
            except OSError:
                pass

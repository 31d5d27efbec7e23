"""Socket client pump for the bundled planners.

Connects to a benchmark server, walks the hello / episode_list /
episode_start flow, fetches each map once by digest, and drives a fresh
policy instance through every episode with strict sense/act alternation.
"""
from __future__ import annotations

import socket
from typing import Callable, Optional

from .core import EnvironmentMap, Pose2D
from .engine import agent_from_doc, command_to_doc
from .planners.policies import PlanContext
from .protocol import (
    PROTOCOL_VERSION,
    LineTransport,
    Message,
    ProtocolError,
    message,
    parse_map,
    parse_world_state,
)
from .robot import RobotSpec


class ClientError(RuntimeError):
    pass


def _connect(address: tuple[str, int] | str, timeout: float) -> LineTransport:
    if isinstance(address, str):
        sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        sock.settimeout(timeout)
        sock.connect(address)
    else:
        sock = socket.create_connection(address, timeout=timeout)
    return LineTransport(sock, recv_deadline=timeout)


def run_policy_client(address: tuple[str, int] | str,
                      policy_factory: Callable[[], object],
                      timeout: float = 120.0) -> list[dict]:
    """Run a policy against a live server; returns episode_end docs."""
    transport = _connect(address, timeout)
    maps: dict[str, EnvironmentMap] = {}
    outcomes: list[dict] = []
    try:
        transport.send(message("hello", version=PROTOCOL_VERSION))
        reply = transport.recv()
        if reply.type != "hello":
            raise ClientError(f"expected hello, got {reply.type}")
        listing = transport.recv()
        if listing.type != "episode_list":
            raise ClientError(f"expected episode_list, got {listing.type}")

        while True:
            msg = transport.recv()
            if msg.type == "bye":
                break
            if msg.type == "error":
                raise ClientError(f"server error: {msg['reason']}")
            if msg.type != "episode_start":
                raise ClientError(f"expected episode_start, got {msg.type}")
            outcomes.append(_run_episode(transport, msg, maps, policy_factory()))
    finally:
        transport.close()
    return outcomes


def _fetch_map(transport: LineTransport, env_ref: dict,
               cache: dict[str, EnvironmentMap]) -> EnvironmentMap:
    digest = env_ref["digest"]
    if digest in cache:
        return cache[digest]
    transport.send(message("get_map", environment=env_ref["name"]))
    reply = transport.recv()
    if reply.type != "map":
        raise ClientError(f"expected map, got {reply.type}")
    env = parse_map(reply)
    if env.digest() != digest:
        raise ClientError(f"map digest mismatch for {env.name!r}")
    cache[digest] = env
    return env


def _run_episode(transport: LineTransport, start_msg: Message,
                 cache: dict[str, EnvironmentMap], policy) -> dict:
    env = _fetch_map(transport, start_msg["environment"], cache)
    robot_doc = start_msg["robot"]
    spec = RobotSpec(**robot_doc)
    goal = start_msg["goal"]
    ctx = PlanContext(
        goal=(goal["x"], goal["y"]),
        goal_radius=goal["radius"],
        dt=1.0 / start_msg["tick_rate"],
        env=env,
        spec=spec,
    )
    policy.begin_episode(ctx)

    while True:
        transport.send(message("sense"))
        reply = transport.recv()
        if reply.type == "episode_end":
            return reply.body
        if reply.type == "error":
            raise ClientError(f"server error: {reply['reason']}")
        state = parse_world_state(reply)
        command = policy.decide(state.robot, state.pedestrians)
        transport.send(message("act", command=command_to_doc(command)))

"""Wire format: newline-delimited JSON messages over a stream socket.

Message field names are fixed by the schema document shipped with the
package (schema/wire_protocol_v1.json); decode validates incoming lines
against it. Encoding is canonical (sorted keys, compact separators) so a
decode/encode round trip is byte-identical.
"""
from __future__ import annotations

import json
import math
import socket
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from .core import AgentState, EnvironmentMap
from .engine import (
    SimState,
    Termination,
    TerminationKind,
    agent_from_doc,
    agent_to_doc,
    command_from_doc,
    command_to_doc,
)

PROTOCOL_VERSION = 1


def _load_schema() -> dict:
    text = resources.files("replaynav").joinpath(
        "schema/wire_protocol_v1.json").read_text()
    return json.loads(text)


SCHEMA = _load_schema()
MESSAGE_TYPES = frozenset(SCHEMA["messages"])


class ProtocolError(ValueError):
    """Malformed or out-of-order message; the reason is wire-safe."""


class TransportClosed(ConnectionError):
    """Peer closed the stream."""


class ReceiveTimeout(TimeoutError):
    """No complete line arrived within the receive deadline."""


@dataclass(frozen=True)
class Message:
    type: str
    body: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.body[key]

    def get(self, key: str, default=None):
        return self.body.get(key, default)


def message(type_: str, **body) -> Message:
    return Message(type=type_, body=body)


def encode(msg: Message) -> bytes:
    """Canonical single-line encoding, newline terminated."""
    if msg.type not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type: {msg.type!r}")
    doc = {"type": msg.type, **msg.body}
    return (json.dumps(doc, sort_keys=True, separators=(",", ":"),
                       allow_nan=False) + "\n").encode("utf-8")


def decode(line: bytes | str) -> Message:
    """Parse and validate one complete line against the schema."""
    if isinstance(line, bytes):
        line = line.decode("utf-8", errors="replace")
    line = line.strip()
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(
            f"invalid JSON at offset {exc.pos}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ProtocolError("message must be a JSON object")
    mtype = doc.pop("type", None)
    if mtype is None:
        raise ProtocolError("missing required field 'type'")
    spec = SCHEMA["messages"].get(mtype)
    if spec is None:
        raise ProtocolError(f"unknown message type: {mtype!r}")
    for name in spec["required"]:
        if name != "type" and name not in doc:
            raise ProtocolError(f"{mtype}: missing required field {name!r}")
    if mtype == "hello" and doc.get("version") != PROTOCOL_VERSION:
        raise ProtocolError(
            f"unsupported protocol version {doc.get('version')!r}; "
            f"server speaks {PROTOCOL_VERSION}")
    return Message(type=mtype, body=doc)


# ---------------------------------------------------------------------------
# payload builders


def world_state_message(state: SimState) -> Message:
    return message(
        "world_state",
        t=state.t,
        tick=state.tick,
        robot=agent_to_doc(state.robot),
        pedestrians=[agent_to_doc(p) for p in state.pedestrians],
        termination=termination_to_doc(state.termination),
    )


def termination_to_doc(term: Optional[Termination]) -> Optional[dict]:
    if term is None:
        return None
    return {"kind": term.kind.value, "success": term.success,
            "pedestrian_collisions": term.pedestrian_collisions}


def termination_from_doc(doc: Optional[dict]) -> Optional[Termination]:
    if doc is None:
        return None
    return Termination(kind=TerminationKind(doc["kind"]),
                       success=doc["success"],
                       pedestrian_collisions=doc["pedestrian_collisions"])


def parse_world_state(msg: Message) -> SimState:
    if msg.type != "world_state":
        raise ProtocolError(f"expected world_state, got {msg.type}")
    return SimState(
        t=msg["t"],
        tick=msg["tick"],
        robot=agent_from_doc(msg["robot"]),
        pedestrians=tuple(agent_from_doc(p) for p in msg["pedestrians"]),
        termination=termination_from_doc(msg["termination"]),
    )


def map_message(env: EnvironmentMap) -> Message:
    rows = ["".join("1" if cell else "0" for cell in row)
            for row in env.traversable]
    return message("map", name=env.name, digest=env.digest(),
                   resolution=env.resolution, origin=list(env.origin),
                   rows=rows)


def parse_map(msg: Message) -> EnvironmentMap:
    if msg.type != "map":
        raise ProtocolError(f"expected map, got {msg.type}")
    grid = np.array([[c == "1" for c in row] for row in msg["rows"]])
    return EnvironmentMap(grid, resolution=msg["resolution"],
                          origin=tuple(msg["origin"]), name=msg["name"])


def environment_ref(env: EnvironmentMap) -> dict:
    h, w = env.shape
    return {"name": env.name, "digest": env.digest(),
            "resolution": env.resolution, "origin": list(env.origin),
            "width": w, "height": h}


# ---------------------------------------------------------------------------
# line-framed stream transport


class LineTransport:
    """Blocking send/receive of framed messages over a stream socket.

    Every receive honors a deadline so the server can never block
    forever on a silent peer.
    """

    def __init__(self, sock: socket.socket, recv_deadline: float = 120.0):
        self.sock = sock
        self.recv_deadline = recv_deadline
        self._buffer = b""
        sock.settimeout(recv_deadline)
        try:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            pass  # non-TCP transports (e.g. unix sockets) lack the option

    def send(self, msg: Message) -> None:
        try:
            self.sock.sendall(encode(msg))
        except OSError as exc:
            raise TransportClosed(f"send failed: {exc}") from exc

    def recv(self) -> Message:
        line = self.recv_raw()
        return decode(line)

    def recv_raw(self) -> bytes:
        while b"\n" not in self._buffer:
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                raise ReceiveTimeout(
                    f"no message within {self.recv_deadline}s") from None
            except OSError as exc:
                raise TransportClosed(f"recv failed: {exc}") from exc
            if not chunk:
                raise TransportClosed("peer closed the connection")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

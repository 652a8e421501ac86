"""Wire protocol and session management for agents under test.

Newline-delimited JSON in the canonical encoding (see canonical_json and
docs/protocol.md). The handshake is agent-initiated: the agent sends HELLO,
the harness validates the version and replies HELLO_ACK, then the loop is
strict lock-step: one TICK down, one CONTROL up, matching tick indices,
until the harness sends END.

Transports: spawned child process over stdio (``cmd:<command>``), TCP client
to a listening agent (``tcp:<host>:<port>``), or the in-process adapter for
builtin policies (``builtin:privileged`` / ``builtin:sensor``), which skips
serialization but follows the identical scoring path.
"""

from __future__ import annotations

import base64
import queue
import shlex
import socket
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from .baseline_agents import (
    SensorContext,
    privileged_policy,
    sensor_policy,
)
from .canonical_json import canonical_line, parse_line
from .errors import (
    AgentDied,
    AgentError,
    AgentProtocolError,
    AgentTimeout,
    HandshakeFailed,
    InvalidParameter,
)
from .microsim import EgoControl
from .sensor_models import (
    Image,
    ObservationBundle,
    PointCloud,
    ScalarReading,
    SensorKind,
)

PROTOCOL_VERSION = "sraf/1"
HANDSHAKE_DEADLINE_S = 5.0
DEFAULT_TICK_DEADLINE_S = 2.0


@dataclass(frozen=True)
class SensorSuite:
    """Sensors the harness synthesizes and delivers for a whole benchmark."""

    has_camera: bool = True
    has_lidar: bool = True
    scalars: frozenset[SensorKind] = frozenset(SensorKind)
    privileged: bool = False

    def __post_init__(self):
        if not (self.has_camera or self.has_lidar or self.scalars or self.privileged):
            raise InvalidParameter("suite needs at least one sensor or the privileged flag")

    def scalar_names(self) -> list[str]:
        return [k.name for k in SensorKind if k in self.scalars]


@dataclass(frozen=True)
class RouteMeta:
    """Handshake payload: timing, suite, and the route in the GNSS frame."""

    dt: float
    suite: SensorSuite
    anchor: tuple[float, float]
    waypoints_gnss: tuple[tuple[float, float], ...]


# --------------------------------------------------------------------- codec

def encode_hello(name: str) -> bytes:
    return canonical_line({"name": name, "type": "HELLO", "version": PROTOCOL_VERSION})


def encode_hello_ack(meta: RouteMeta) -> bytes:
    return canonical_line({
        "dt": meta.dt,
        "route": {
            "anchor": [meta.anchor[0], meta.anchor[1]],
            "waypoints": [[lat, lon] for lat, lon in meta.waypoints_gnss],
        },
        "suite": {
            "camera": meta.suite.has_camera,
            "lidar": meta.suite.has_lidar,
            "scalars": meta.suite.scalar_names(),
        },
        "type": "HELLO_ACK",
        "version": PROTOCOL_VERSION,
    })


def encode_tick(bundle: ObservationBundle) -> bytes:
    """One TICK line; image pixels as base64 of the raw row-major bytes,
    LiDAR as a flat [x, y, z, channel, ...] array. Round-trips bit-exactly."""
    camera = None
    if bundle.camera is not None:
        camera = {
            "height": bundle.camera.height,
            "pixels_b64": base64.b64encode(bundle.camera.pixels.tobytes()).decode("ascii"),
            "width": bundle.camera.width,
        }
    lidar = None
    if bundle.lidar is not None:
        flat: list[float | int] = []
        for (x, y, z), c in zip(bundle.lidar.xyz, bundle.lidar.channels):
            flat.extend((float(x), float(y), float(z), int(c)))
        lidar = {"num_channels": bundle.lidar.num_channels, "points": flat}
    return canonical_line({
        "camera": camera,
        "lidar": lidar,
        "scalars": [
            {"kind": r.kind.name, "values": [float(v) for v in r.values]}
            for r in bundle.scalars
        ],
        "sim_time_s": bundle.sim_time_s,
        "tick": bundle.tick,
        "type": "TICK",
    })


def decode_tick(line: bytes) -> ObservationBundle:
    """Inverse of encode_tick (used by tests and Python clients)."""
    msg = parse_line(line)
    if msg.get("type") != "TICK":
        raise AgentProtocolError(f"expected TICK, got {msg.get('type')!r}")
    camera = None
    if msg.get("camera") is not None:
        c = msg["camera"]
        raw = base64.b64decode(c["pixels_b64"])
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(c["height"], c["width"])
        camera = Image(c["width"], c["height"], pixels)
    lidar = None
    if msg.get("lidar") is not None:
        l = msg["lidar"]
        flat = l["points"]
        if len(flat) % 4 != 0:
            raise AgentProtocolError("lidar points array length not a multiple of 4")
        arr = np.array(flat, dtype=np.float64).reshape(-1, 4)
        lidar = PointCloud(int(l["num_channels"]), arr[:, :3],
                           arr[:, 3].astype(np.int64))
    scalars = tuple(
        ScalarReading(SensorKind(s["kind"]), tuple(float(v) for v in s["values"]))
        for s in msg.get("scalars", ())
    )
    return ObservationBundle(
        tick=int(msg["tick"]),
        sim_time_s=float(msg["sim_time_s"]),
        camera=camera,
        lidar=lidar,
        scalars=scalars,
    )


def encode_control(tick: int, ctrl: EgoControl) -> bytes:
    return canonical_line({
        "brake": ctrl.brake,
        "steer": ctrl.steer,
        "throttle": ctrl.throttle,
        "tick": tick,
        "type": "CONTROL",
    })


def decode_control(line: bytes, expected_tick: int) -> EgoControl:
    """Parse a CONTROL reply; clamps fields, rejects wrong tick indices."""
    try:
        msg = parse_line(line)
    except ValueError as exc:
        raise AgentProtocolError(f"unparseable control line: {exc}", tick=expected_tick)
    if not isinstance(msg, dict) or msg.get("type") != "CONTROL":
        raise AgentProtocolError(
            f"expected CONTROL, got {msg.get('type') if isinstance(msg, dict) else msg!r}",
            tick=expected_tick)
    if msg.get("tick") != expected_tick:
        raise AgentProtocolError(
            f"control tick {msg.get('tick')!r} != expected {expected_tick}",
            tick=expected_tick)
    try:
        return EgoControl(
            steer=float(msg["steer"]),
            throttle=float(msg["throttle"]),
            brake=float(msg["brake"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise AgentProtocolError(f"bad control fields: {exc}", tick=expected_tick)


def encode_end(result: dict) -> bytes:
    return canonical_line({"result": result, "type": "END"})


# ---------------------------------------------------------------- transports

class _LineTransport:
    """Reader-thread line transport: first of {line, deadline} wins; a late
    reply is discarded with the connection."""

    def __init__(self):
        self._queue: queue.Queue = queue.Queue()
        self._thread: threading.Thread | None = None

    def _start_reader(self, stream):
        def pump():
            try:
                for line in iter(stream.readline, b""):
                    self._queue.put(line)
            except (OSError, ValueError):
                pass
            self._queue.put(None)  # EOF sentinel

        self._thread = threading.Thread(target=pump, daemon=True)
        self._thread.start()

    def recv_line(self, deadline_s: float, tick: int | None = None) -> bytes:
        try:
            line = self._queue.get(timeout=deadline_s)
        except queue.Empty:
            raise AgentTimeout(f"no reply within {deadline_s} s", tick=tick)
        if line is None:
            raise AgentDied("agent closed its output stream", tick=tick)
        return line

    def send_line(self, data: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class ProcessTransport(_LineTransport):
    """Child process over stdin/stdout pipes."""

    def __init__(self, command: str):
        super().__init__()
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
            )
        except OSError as exc:
            raise AgentDied(f"cannot spawn agent process: {exc}")
        self._start_reader(self._proc.stdout)

    def send_line(self, data: bytes) -> None:
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            raise AgentDied("agent process closed its input pipe")

    def close(self) -> None:
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        try:
            self._proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class TcpTransport(_LineTransport):
    """TCP client to an agent listening on host:port."""

    def __init__(self, host: str, port: int, connect_timeout_s: float = 5.0):
        super().__init__()
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout_s)
        except OSError as exc:
            raise AgentDied(f"cannot connect to agent at {host}:{port}: {exc}")
        self._sock.settimeout(None)
        self._rfile = self._sock.makefile("rb")
        self._start_reader(self._rfile)

    def send_line(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError:
            raise AgentDied("agent connection closed")

    def close(self) -> None:
        for closer in (self._rfile.close, self._sock.close):
            try:
                closer()
            except OSError:
                pass


# ------------------------------------------------------------------ sessions

@dataclass(frozen=True)
class TickData:
    """One lock-step exchange: the observation for this tick plus the
    privileged context (builtin privileged adapter only)."""

    tick: int
    bundle: ObservationBundle
    priv: Any = None
    encoded: bytes | None = None  # cached wire line for external sessions


class TickSource(Protocol):
    def next_tick(self) -> "TickData | Any":
        """Produce the next TickData, or any other object to finish."""

    def push_control(self, ctrl: EgoControl) -> None:
        """Deliver the accepted control for the tick just produced."""

    def abort(self, error: AgentError) -> Any:
        """Score the run as it stands after an agent failure."""


class AgentSession(Protocol):
    name: str

    def handshake(self, meta: RouteMeta) -> None: ...
    def tick(self, data: TickData, deadline_s: float) -> EgoControl: ...
    def end(self, result: dict) -> None: ...
    def close(self) -> None: ...


class BuiltinSession:
    """In-process adapter: no serialization, identical scoring path."""

    def __init__(self, policy: str):
        if policy not in ("privileged", "sensor"):
            raise InvalidParameter(f"unknown builtin policy {policy!r}")
        self.policy = policy
        self.name = f"builtin:{policy}"
        self._meta: RouteMeta | None = None

    def handshake(self, meta: RouteMeta) -> None:
        self._meta = meta

    def tick(self, data: TickData, deadline_s: float) -> EgoControl:
        if self.policy == "privileged":
            return privileged_policy(data.priv)
        return sensor_policy(SensorContext(
            bundle=data.bundle,
            route_gnss=self._meta.waypoints_gnss,
            anchor=self._meta.anchor,
        ))

    def end(self, result: dict) -> None:
        pass

    def close(self) -> None:
        pass


class ExternalSession:
    """Session over a line transport (child process or TCP)."""

    def __init__(self, transport: _LineTransport, label: str):
        self._transport = transport
        self.name = label

    def handshake(self, meta: RouteMeta) -> None:
        try:
            line = self._transport.recv_line(HANDSHAKE_DEADLINE_S)
        except AgentError as exc:
            raise HandshakeFailed(f"no HELLO: {exc}") from exc
        try:
            msg = parse_line(line)
        except ValueError as exc:
            raise HandshakeFailed(f"unparseable HELLO: {exc}")
        if not isinstance(msg, dict) or msg.get("type") != "HELLO":
            raise HandshakeFailed(f"expected HELLO, got {msg!r}")
        if msg.get("version") != PROTOCOL_VERSION:
            raise HandshakeFailed(
                f"protocol version {msg.get('version')!r} != {PROTOCOL_VERSION!r}")
        if isinstance(msg.get("name"), str) and msg["name"]:
            self.name = msg["name"]
        self._transport.send_line(encode_hello_ack(meta))

    def tick(self, data: TickData, deadline_s: float) -> EgoControl:
        wire = data.encoded if data.encoded is not None else encode_tick(data.bundle)
        self._transport.send_line(wire)
        line = self._transport.recv_line(deadline_s, tick=data.tick)
        return decode_control(line, expected_tick=data.tick)

    def end(self, result: dict) -> None:
        try:
            self._transport.send_line(encode_end(result))
        except AgentError:
            pass  # agent already gone; END is best-effort

    def close(self) -> None:
        self._transport.close()


def open_session(endpoint: str) -> AgentSession:
    """Build a session from an endpoint spec: ``builtin:<policy>``,
    ``cmd:<command>``, or ``tcp:<host>:<port>``."""
    if endpoint.startswith("builtin:"):
        return BuiltinSession(endpoint.split(":", 1)[1])
    if endpoint.startswith("cmd:"):
        return ExternalSession(ProcessTransport(endpoint.split(":", 1)[1]), endpoint)
    if endpoint.startswith("tcp:"):
        rest = endpoint.split(":", 2)
        if len(rest) != 3:
            raise InvalidParameter(f"tcp endpoint must be tcp:host:port, got {endpoint!r}")
        return ExternalSession(TcpTransport(rest[1], int(rest[2])), endpoint)
    raise InvalidParameter(f"unknown agent endpoint {endpoint!r}")


@dataclass
class SessionOutcome:
    agent_name: str
    result: Any
    error_code: str | None = None
    error_tick: int | None = None


def run_session(session: AgentSession, meta: RouteMeta, source: TickSource,
                deadline_s: float = DEFAULT_TICK_DEADLINE_S) -> SessionOutcome:
    """Drive handshake and the lock-step TICK/CONTROL loop to completion.

    Any agent failure (handshake, timeout, death, protocol violation) stops
    the run immediately; the source scores it with the completion and
    infractions accumulated so far. The harness never advances simulation
    time while waiting, so agent latency below the deadline cannot change
    outcomes.
    """
    error: AgentError | None = None
    try:
        session.handshake(meta)
    except AgentError as exc:
        error = exc
    result = None
    if error is None:
        while True:
            item = source.next_tick()
            if not isinstance(item, TickData):
                result = item
                break
            try:
                ctrl = session.tick(item, deadline_s)
            except AgentError as exc:
                if exc.tick is None:
                    exc.tick = item.tick
                error = exc
                break
            source.push_control(ctrl)
    if error is not None:
        result = source.abort(error)
    end_payload = result.summary() if hasattr(result, "summary") else {}
    try:
        session.end(end_payload)
    finally:
        session.close()
    return SessionOutcome(
        agent_name=session.name,
        result=result,
        error_code=None if error is None else error.code,
        error_tick=None if error is None else error.tick,
    )

"""Live-session server: a remote human (or scripted client) acts as the expert.

Wire protocol: JSON text messages over WebSocket framing (RFC 6455, text
opcode; each frame is a length-prefixed UTF-8 payload). Numbers are
serialized with repr so values survive the round trip bit-exactly.

Sessions are recorded as one JSON entry per line, in the exact order the
environment loop sent and consumed messages, which makes replay a pure
walk of the log: outbound entries are verified against the re-run, inbound
entries are fed back in.
"""
from __future__ import annotations

import base64
import hashlib
import json
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import serialize_config
from .envs import env_geometry, make_env
from .orchestrator import ProviderDisconnected, run_method
from .records import TraceRecorder

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
RECV_TIMEOUT = 60.0


class IntegrityError(RuntimeError):
    """A session record is truncated or inconsistent with the re-run."""


def _json_dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [float(v) for v in value.ravel()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


# ---------------------------------------------------------------------------
# websocket framing


class WebSocketChannel:
    """One connected peer. Server frames are unmasked, client frames masked."""

    def __init__(self, sock: socket.socket, mask_outgoing: bool):
        self.sock = sock
        self.mask_outgoing = mask_outgoing
        self._send_lock = threading.Lock()
        self._buffer = b""

    # -- handshake

    @staticmethod
    def accept_key(key: str) -> str:
        digest = hashlib.sha1((key + _WS_GUID).encode()).digest()
        return base64.b64encode(digest).decode()

    def server_handshake(self) -> None:
        request = b""
        while b"\r\n\r\n" not in request:
            chunk = self.sock.recv(4096)
            if not chunk:
                raise ProviderDisconnected("peer closed during handshake")
            request += chunk
        key = None
        for line in request.split(b"\r\n"):
            if line.lower().startswith(b"sec-websocket-key:"):
                key = line.split(b":", 1)[1].strip().decode()
        if key is None:
            raise ProviderDisconnected("not a websocket upgrade request")
        response = (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {self.accept_key(key)}\r\n\r\n"
        )
        self.sock.sendall(response.encode())

    def client_handshake(self, host: str, port: int) -> None:
        key = base64.b64encode(b"daggerlab-client") .decode()
        request = (
            f"GET / HTTP/1.1\r\nHost: {host}:{port}\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
        )
        self.sock.sendall(request.encode())
        response = b""
        while b"\r\n\r\n" not in response:
            chunk = self.sock.recv(4096)
            if not chunk:
                raise ProviderDisconnected("server closed during handshake")
            response += chunk
        if b"101" not in response.split(b"\r\n", 1)[0]:
            raise ProviderDisconnected("handshake refused")

    # -- frames

    def _read_exact(self, n: int) -> bytes:
        while len(self._buffer) < n:
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout as exc:
                raise ProviderDisconnected("recv timeout") from exc
            except OSError as exc:
                raise ProviderDisconnected(str(exc)) from exc
            if not chunk:
                raise ProviderDisconnected("peer closed")
            self._buffer += chunk
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def recv_text(self) -> str:
        while True:
            b0, b1 = self._read_exact(2)
            opcode = b0 & 0x0F
            masked = bool(b1 & 0x80)
            length = b1 & 0x7F
            if length == 126:
                (length,) = struct.unpack(">H", self._read_exact(2))
            elif length == 127:
                (length,) = struct.unpack(">Q", self._read_exact(8))
            mask = self._read_exact(4) if masked else b""
            payload = self._read_exact(length)
            if masked:
                payload = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
            if opcode == 0x1:
                return payload.decode("utf-8")
            if opcode == 0x8:  # close
                raise ProviderDisconnected("peer sent close")
            if opcode == 0x9:  # ping -> pong
                self._send_frame(0xA, payload)
                continue
            # ignore pongs and continuation frames (unused by this protocol)

    def _send_frame(self, opcode: int, payload: bytes) -> None:
        header = bytes([0x80 | opcode])
        mask_bit = 0x80 if self.mask_outgoing else 0
        n = len(payload)
        if n < 126:
            header += bytes([mask_bit | n])
        elif n < 65536:
            header += bytes([mask_bit | 126]) + struct.pack(">H", n)
        else:
            header += bytes([mask_bit | 127]) + struct.pack(">Q", n)
        if self.mask_outgoing:
            mask = b"\x37\xfa\x21\x3d"
            header += mask
            payload = bytes(c ^ mask[i % 4] for i, c in enumerate(payload))
        with self._send_lock:
            try:
                self.sock.sendall(header + payload)
            except OSError as exc:
                raise ProviderDisconnected(str(exc)) from exc

    def send_text(self, text: str) -> None:
        self._send_frame(0x1, text.encode("utf-8"))

    def send_json(self, obj) -> None:
        self.send_text(_json_dumps(obj))

    def recv_json(self):
        return json.loads(self.recv_text())

    def close(self) -> None:
        try:
            self._send_frame(0x8, b"")
        except ProviderDisconnected:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


def connect_client(host: str, port: int, timeout=RECV_TIMEOUT) -> WebSocketChannel:
    sock = socket.create_connection((host, port), timeout=timeout)
    channel = WebSocketChannel(sock, mask_outgoing=True)
    channel.client_handshake(host, port)
    return channel


# ---------------------------------------------------------------------------
# session records


@dataclass
class SessionRecord:
    entries: list = field(default_factory=list)

    def append(self, direction: str, msg: dict) -> None:
        self.entries.append({
            "seq": len(self.entries), "dir": direction,
            "ts": time.time(), "msg": msg,
        })

    def save(self, path) -> None:
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(_json_dumps(e) + "\n")

    @classmethod
    def load(cls, path) -> "SessionRecord":
        record = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    record.entries.append(json.loads(line))
        return record

    def start_message(self) -> dict:
        for e in self.entries:
            if e["msg"].get("type") == "session_control" and e["msg"]["action"] == "start":
                return e["msg"]
        raise IntegrityError("record has no session start")

    def is_complete(self) -> bool:
        return any(e["msg"].get("type") == "session_control"
                   and e["msg"]["action"] == "end" for e in self.entries)


def config_digest(config) -> str:
    return hashlib.sha256(serialize_config(config).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# live transport: reader thread feeding a mailbox


class LiveTransport:
    """Owns the channel; inbound messages land in a queue, consumed (and
    recorded) only by the environment loop."""

    def __init__(self, channel: WebSocketChannel, record: SessionRecord):
        self.channel = channel
        self.record = record
        self.mailbox: queue.Queue = queue.Queue()
        self._dead = None
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        try:
            while True:
                self.mailbox.put(self.channel.recv_json())
        except ProviderDisconnected as exc:
            self._dead = exc
            self.mailbox.put(None)

    def send(self, msg: dict) -> None:
        self.record.append("out", msg)
        self.channel.send_json(msg)

    def poll(self):
        """Nonblocking consume; returns None when the mailbox is empty."""
        try:
            msg = self.mailbox.get_nowait()
        except queue.Empty:
            return None
        if msg is None:
            raise ProviderDisconnected(str(self._dead))
        self.record.append("in", msg)
        return msg

    def wait(self, timeout=RECV_TIMEOUT):
        try:
            msg = self.mailbox.get(timeout=timeout)
        except queue.Empty as exc:
            raise ProviderDisconnected("timed out waiting for the console") from exc
        if msg is None:
            raise ProviderDisconnected(str(self._dead))
        self.record.append("in", msg)
        return msg


class ReplayTransport:
    """Walks a recorded session: outbound sends are verified against the log,
    inbound consumes return the recorded messages."""

    def __init__(self, record: SessionRecord):
        self.entries = record.entries
        self.pos = 0

    def _next(self):
        if self.pos >= len(self.entries):
            return None
        return self.entries[self.pos]

    def send(self, msg: dict) -> None:
        entry = self._next()
        if entry is None:
            raise IntegrityError(f"record truncated: expected outbound {msg.get('type')}")
        if entry["dir"] != "out":
            raise IntegrityError(
                f"record out of order at seq {entry['seq']}: expected outbound "
                f"{msg.get('type')}, found inbound {entry['msg'].get('type')}")
        recorded = entry["msg"]
        if recorded.get("type") != msg.get("type") or recorded.get("t") != msg.get("t"):
            raise IntegrityError(
                f"replay diverged at seq {entry['seq']}: re-run produced "
                f"{msg.get('type')} t={msg.get('t')}, record has "
                f"{recorded.get('type')} t={recorded.get('t')}")
        self.pos += 1

    def poll(self):
        entry = self._next()
        if entry is None or entry["dir"] != "in":
            return None
        self.pos += 1
        return entry["msg"]

    def wait(self, timeout=None):
        entry = self._next()
        if entry is None:
            raise IntegrityError("record truncated while an expert action was awaited")
        if entry["dir"] != "in":
            raise IntegrityError(
                f"missing expert message before outbound seq {entry['seq']} "
                f"({entry['msg'].get('type')} t={entry['msg'].get('t')})")
        self.pos += 1
        return entry["msg"]


# ---------------------------------------------------------------------------
# remote expert providers


def _parse_action(env, raw):
    if env.spec.action_kind == "discrete":
        return int(raw)
    return np.asarray(raw, dtype=np.float64)


class RemoteExpert:
    """Lock-step distillation-gated expert: asked to act only during takeover."""

    kind = "remote_human"

    def __init__(self, transport, env):
        self.transport = transport
        self.env = env
        self.current_t = 0
        self.current_frame = None
        self.in_takeover = False

    def start_episode(self):
        self.in_takeover = False

    def observe_frame(self, frame_msg: dict) -> None:
        self.current_t = frame_msg["t"]
        self.current_frame = frame_msg
        if frame_msg["controller"] == "novice":
            self.in_takeover = False

    def action(self, env, state, obs):
        if not self.in_takeover:
            self.transport.send({"type": "takeover_request", "t": self.current_t,
                                 "reason": "gate"})
            self.in_takeover = True
        while True:
            try:
                msg = self.transport.wait()
            except IntegrityError as exc:
                raise IntegrityError(
                    f"no expert_action recorded for t={self.current_t}") from exc
            if msg.get("type") != "expert_action":
                continue  # stray control messages are ignored in gate mode
            if msg.get("t") != self.current_t:
                self.transport.send({"type": "error", "detail": "stale expert_action",
                                     "expected_t": self.current_t, "got_t": msg.get("t")})
                if self.current_frame is not None:
                    self.transport.send(self.current_frame)
                continue
            return _parse_action(env, msg["action"])


class RemoteGatedExpert:
    """Human-gated expert: takeover/handback arrive at any frame; actions are
    lock-step while the human drives."""

    kind = "human_gated"

    def __init__(self, transport, env):
        self.transport = transport
        self.env = env
        self.current_t = 0
        self.desired = False

    def start_episode(self):
        self.desired = False

    def observe_frame(self, frame_msg: dict) -> None:
        self.current_t = frame_msg["t"]

    def wants_control(self, env, state, obs, currently_expert) -> bool:
        while True:
            msg = self.transport.poll()
            if msg is None:
                break
            if msg.get("type") == "takeover":
                self.desired = True
            elif msg.get("type") == "handback":
                self.desired = False
        return self.desired

    def action(self, env, state, obs):
        while True:
            try:
                msg = self.transport.wait()
            except IntegrityError as exc:
                raise IntegrityError(
                    f"no expert_action recorded for t={self.current_t}") from exc
            if msg.get("type") == "handback":
                # takes effect next frame; the current one still needs an action
                self.desired = False
                continue
            if msg.get("type") != "expert_action":
                continue
            if msg.get("t") != self.current_t:
                self.transport.send({"type": "error", "detail": "stale expert_action",
                                     "expected_t": self.current_t, "got_t": msg.get("t")})
                continue
            return _parse_action(env, msg["action"])


# ---------------------------------------------------------------------------
# session driving


def _frame_message(env, session_id, seq, frame) -> dict:
    geometry = env.pose_summary(frame["state"])
    geometry["walls"] = env_geometry(env.spec.env_id).get("walls", [])
    return {
        "type": "state_frame", "session": session_id, "seq": seq,
        "episode": frame["episode"], "t": frame["t"],
        "observation": _jsonable(frame["observation"]),
        "geometry": geometry,
        "measure": _jsonable(frame["measure"]),
        "threshold": _jsonable(frame["threshold"]),
        "controller": frame["controller"],
        "dwell": frame["dwell"],
        "autonomous": bool(frame["autonomous"]),
    }


def drive_session(config, transport, session_id: str, tick_hz: float = 0.0,
                  trace: TraceRecorder | None = None):
    """Run one configured session over a transport; returns (actor, metrics)."""
    if config.method not in ("rnd", "hg"):
        raise ValueError("live sessions support methods 'rnd' and 'hg'")
    env = make_env(config.env)
    provider = (RemoteExpert if config.method == "rnd" else RemoteGatedExpert)(
        transport, env)
    seq_counter = {"n": 0}
    delay = 1.0 / tick_hz if tick_hz > 0 else 0.0

    def on_frame(frame):
        msg = _frame_message(env, session_id, seq_counter["n"], frame)
        seq_counter["n"] += 1
        provider.observe_frame(msg)
        transport.send(msg)
        if delay and frame.get("autonomous"):
            time.sleep(delay)

    transport.send({
        "type": "session_control", "action": "start", "session": session_id,
        "config": _config_payload(config), "digest": config_digest(config),
        "tick_hz": tick_hz, "geometry": env_geometry(config.env),
    })
    actor, metrics = run_method(config, expert=provider, trace=trace, on_frame=on_frame)
    row = metrics.final
    transport.send({
        "type": "session_control", "action": "end", "session": session_id,
        "metrics": {
            "task_performance": row.task_performance,
            "dataset_size": row.dataset_size,
            "nswitch": row.nswitch,
            "expert_frames": row.expert_frames,
            "monitoring_frames": row.monitoring_frames,
        },
    })
    return actor, metrics


def _config_payload(config) -> dict:
    from .orchestrator import config_to_dict

    return config_to_dict(config)


class SessionServer:
    """One live session per server instance, over a real socket."""

    def __init__(self, config, host="127.0.0.1", port=0, tick_hz=10.0,
                 record_path=None, out_dir=None):
        self.config = config
        self.host = host
        self.tick_hz = tick_hz
        self.record_path = Path(record_path) if record_path else None
        self.out_dir = Path(out_dir) if out_dir else None
        self.listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.listener.bind((host, port))
        self.listener.listen(1)
        self.port = self.listener.getsockname()[1]

    def serve_once(self):
        """Accept exactly one console and run the configured session."""
        sock, _ = self.listener.accept()
        sock.settimeout(RECV_TIMEOUT)
        channel = WebSocketChannel(sock, mask_outgoing=False)
        channel.server_handshake()
        record = SessionRecord()
        transport = LiveTransport(channel, record)
        env = make_env(self.config.env)
        trace = TraceRecorder(
            f"{self.config.method}-{self.config.env}-seed{self.config.seed}", env.spec)
        session_id = config_digest(self.config)
        try:
            actor, metrics = drive_session(self.config, transport, session_id,
                                           tick_hz=self.tick_hz, trace=trace)
        except ProviderDisconnected as exc:
            record.append("out", {"type": "session_control", "action": "abort",
                                  "detail": str(exc)})
            if self.record_path:
                record.save(self.record_path)
            raise
        finally:
            self.listener.close()
        if self.record_path:
            record.save(self.record_path)
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            metrics.write_csv(self.out_dir / "metrics.csv")
            trace.write_csv(self.out_dir / "trajectories.csv")
        channel.close()
        return record, metrics


def replay_session(record_or_path, out_dir=None):
    """Re-drive a recorded session; bit-identical metrics, timestamps aside."""
    record = (record_or_path if isinstance(record_or_path, SessionRecord)
              else SessionRecord.load(record_or_path))
    if not record.is_complete():
        raise IntegrityError("record is incomplete (no session end)")
    start = record.start_message()
    from .orchestrator import config_from_dict

    config = config_from_dict(start["config"])
    env = make_env(config.env)
    trace = TraceRecorder(
        f"{config.method}-{config.env}-seed{config.seed}", env.spec)
    transport = ReplayTransport(record)
    _, metrics = drive_session(config, transport, start["session"], tick_hz=0.0,
                               trace=trace)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics.write_csv(out_dir / "metrics.csv")
        trace.write_csv(out_dir / "trajectories.csv")
    return metrics


def export_traces(record_or_path, out_csv) -> Path:
    """Convert a recorded session into the columnar trajectory dump."""
    record = (record_or_path if isinstance(record_or_path, SessionRecord)
              else SessionRecord.load(record_or_path))
    if not record.is_complete():
        raise IntegrityError("record is incomplete (no session end)")
    start = record.start_message()
    from .orchestrator import config_from_dict

    config = config_from_dict(start["config"])
    env = make_env(config.env)
    trace = TraceRecorder(
        f"{config.method}-{config.env}-seed{config.seed}", env.spec)
    drive_session(config, ReplayTransport(record), start["session"], tick_hz=0.0,
                  trace=trace)
    trace.write_csv(out_csv)
    return Path(out_csv)

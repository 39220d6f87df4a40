"""Newline-delimited JSON service around the Ephemerizer.

Frames are single-line JSON objects with a ``type`` field; binary values are
lowercase hex.  Every request gets exactly one reply line, and a malformed
frame is answered with ``REFUSED{reason: "malformed"}`` without dropping the
connection.  The channel is plain TCP and is not confidential.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading
import time

from .errors import (
    AlreadyDistributed,
    EphemeraError,
    InsufficientShares,
    InvalidExpiry,
    InvalidParams,
    KeyRefused,
    NoAccessKeyRetained,
    UnknownId,
)
from .sharing import SharingParams

log = logging.getLogger(__name__)

MAX_FRAME = 64 * 1024


class _Malformed(Exception):
    pass


def _field(frame: dict, name: str, kind):
    value = frame.get(name)
    if kind is bytes:
        if not isinstance(value, str):
            raise _Malformed(name)
        try:
            return bytes.fromhex(value)
        except ValueError:
            raise _Malformed(name) from None
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _Malformed(name)
        return float(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise _Malformed(name)
    return value


def refused(reason: str, detail: str = "") -> dict:
    reply = {"type": "REFUSED", "reason": reason}
    if detail:
        reply["detail"] = detail
    return reply


class WireService:
    """Frame dispatcher.  All state changes go through one lock."""

    def __init__(self, server, dht, lock: threading.Lock | None = None):
        self.server = server
        self.dht = dht
        self.lock = lock or threading.Lock()

    def handle_line(self, line) -> str:
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError:
                return json.dumps(refused("malformed", "not utf-8"))
        try:
            frame = json.loads(line)
        except json.JSONDecodeError:
            return json.dumps(refused("malformed", "not json"))
        return json.dumps(self.handle_frame(frame))

    def handle_frame(self, frame) -> dict:
        if not isinstance(frame, dict) or not isinstance(frame.get("type"), str):
            return refused("malformed", "frame must be an object with a type")
        handler = getattr(self, "_on_" + frame["type"].lower(), None)
        if handler is None:
            return refused("malformed", f"unknown type {frame['type']}")
        try:
            with self.lock:
                return handler(frame)
        except _Malformed as exc:
            return refused("malformed", f"bad or missing field {exc}")
        except KeyRefused as exc:
            return refused(exc.reason)
        except UnknownId:
            return refused("expired_or_unknown")
        except InvalidExpiry as exc:
            return refused("invalid_expiry", str(exc))
        except AlreadyDistributed:
            return refused("already_distributed")
        except NoAccessKeyRetained:
            return refused("no_access_key")
        except InsufficientShares as exc:
            return refused("insufficient_shares", str(exc))
        except (InvalidParams, EphemeraError, ValueError) as exc:
            return refused("invalid", str(exc))

    def _on_create(self, frame):
        if "ttl" in frame:
            expires_at = self.server.now + _field(frame, "ttl", float)
        else:
            expires_at = _field(frame, "expires_at", float)
        read_once = frame.get("read_once", False)
        if not isinstance(read_once, bool):
            raise _Malformed("read_once")
        grant = self.server.create_key(expires_at, read_once=read_once)
        return {"type": "CREATED", "h": grant.h.hex(), "id_t": grant.id_t,
                "n_t": grant.n_t.hex(), "expires_at": expires_at}

    def _on_ack_encrypted(self, frame):
        id_t, n, k = (_field(frame, name, int) for name in ("id_t", "n", "k"))
        placement = self.server.distribute_shares(id_t, SharingParams(n, k), self.dht)
        return {"type": "SHARES_PLACED", "l": placement.l.hex(), "k": placement.k}

    def _on_request_key(self, frame):
        n_t = _field(frame, "n_t", bytes)
        id_t = _field(frame, "id_t", int)
        return {"type": "KEY", "h": self.server.request_key(n_t, id_t).hex()}

    def _on_refresh(self, frame):
        id_t = _field(frame, "id_t", int)
        return {"type": "REFRESHED", "l": self.server.refresh(id_t, self.dht).hex()}

    def _on_ping(self, frame):
        return {"type": "PONG", "now": self.server.now}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service: WireService = self.server.service
        while True:
            line = self.rfile.readline(MAX_FRAME + 1)
            if not line:
                return
            if len(line) > MAX_FRAME:
                reply = json.dumps(refused("malformed", "frame too long"))
                self.wfile.write(reply.encode() + b"\n")
                return
            if not line.strip():
                continue
            reply = service.handle_line(line.rstrip(b"\r\n"))
            self.wfile.write(reply.encode() + b"\n")


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class ServiceHost:
    """Binds the service, pumps virtual time at 1:1 with wall time, and
    snapshots the server on shutdown."""

    def __init__(self, service: WireService, host: str = "127.0.0.1", port: int = 0,
                 snapshot_path=None, pump_interval: float = 1.0):
        self.service = service
        self.snapshot_path = snapshot_path
        self.pump_interval = pump_interval
        self.tcp = _TcpServer((host, port), _Handler)
        self.tcp.service = service
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._origin = (time.monotonic(), service.dht.now)

    @property
    def address(self) -> tuple[str, int]:
        return self.tcp.server_address[:2]

    def pump(self) -> None:
        """Advance the DHT to wall time and sweep expired records."""
        wall0, virt0 = self._origin
        target = virt0 + (time.monotonic() - wall0)
        with self.service.lock:
            if target > self.service.dht.now:
                self.service.dht.run_until(target)
            self.service.server.sweep_expired()

    def _pump_loop(self):
        while not self._stop.wait(self.pump_interval):
            self.pump()

    def start(self) -> "ServiceHost":
        for target in (self.tcp.serve_forever, self._pump_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        log.info("serving on %s:%d", *self.address)
        return self

    def shutdown(self) -> None:
        self._stop.set()
        self.tcp.shutdown()
        self.tcp.server_close()
        for t in self._threads:
            t.join(timeout=5)
        self.pump()
        if self.snapshot_path is not None:
            with self.service.lock:
                self.service.server.persist(self.snapshot_path)
            log.info("snapshot written to %s", self.snapshot_path)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


class WireClient:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.file = self.sock.makefile("rwb")

    def send_raw(self, line: bytes) -> dict:
        self.file.write(line.rstrip(b"\n") + b"\n")
        self.file.flush()
        reply = self.file.readline()
        if not reply:
            raise ConnectionError("server closed the connection")
        return json.loads(reply)

    def call(self, type_: str, **fields) -> dict:
        return self.send_raw(json.dumps({"type": type_, **fields}).encode())

    def create(self, *, ttl: float | None = None, expires_at: float | None = None,
               read_once: bool = False) -> dict:
        when = {"ttl": ttl} if ttl is not None else {"expires_at": expires_at}
        return self.call("CREATE", read_once=read_once, **when)

    def ack_encrypted(self, id_t: int, n: int, k: int) -> dict:
        return self.call("ACK_ENCRYPTED", id_t=id_t, n=n, k=k)

    def request_key(self, n_t: bytes, id_t: int) -> dict:
        return self.call("REQUEST_KEY", n_t=n_t.hex(), id_t=id_t)

    def refresh(self, id_t: int) -> dict:
        return self.call("REFRESH", id_t=id_t)

    def close(self) -> None:
        self.file.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

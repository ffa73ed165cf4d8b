"""SBI messages and the two transports that carry them.

On TCP every message is one frame: a 4-byte big-endian length followed by a
compact JSON object. One request frame is answered by one response frame on
the same connection.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

HEADER = struct.Struct(">I")
MAX_FRAME = 1 << 20
INJECTOR = "Injector"


class TransportError(Exception):
    pass


class UpstreamTimeout(TransportError):
    pass


class TargetUnreachable(TransportError):
    pass


class AddressInUse(TransportError):
    pass


class FrameError(TransportError):
    pass


class UnknownServiceOp(Exception):
    pass


def _dumps(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class SbiMessage:
    request_id: str
    service_op: str
    origin: str
    target: str
    supi: str | None = None
    body: dict[str, Any] = field(default_factory=dict)

    def to_wire(self) -> dict[str, Any]:
        out = {"request_id": self.request_id, "service_op": self.service_op,
               "origin": self.origin, "target": self.target, "body": self.body}
        if self.supi is not None:
            out["supi"] = self.supi
        return out

    @classmethod
    def from_wire(cls, d: dict[str, Any]) -> SbiMessage:
        try:
            return cls(d["request_id"], d["service_op"], d["origin"], d["target"],
                       d.get("supi"), dict(d.get("body", {})))
        except KeyError as exc:
            raise FrameError(f"request frame lacks {exc.args[0]!r}") from None

    def encode(self) -> bytes:
        return _dumps(self.to_wire())

    @property
    def wire_size(self) -> int:
        return HEADER.size + len(self.encode())


@dataclass(frozen=True)
class SbiResponse:
    request_id: str
    status: str  # "Success" or "Failure"
    body: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "Success"

    @property
    def reason(self) -> str | None:
        return self.body.get("reason")

    @classmethod
    def success(cls, request_id: str, **body) -> SbiResponse:
        return cls(request_id, "Success", body)

    @classmethod
    def failure(cls, request_id: str, reason: str) -> SbiResponse:
        return cls(request_id, "Failure", {"reason": reason})

    def to_wire(self) -> dict[str, Any]:
        return {"request_id": self.request_id, "status": self.status, "body": self.body}

    @classmethod
    def from_wire(cls, d: dict[str, Any]) -> SbiResponse:
        try:
            return cls(d["request_id"], d["status"], dict(d.get("body", {})))
        except KeyError as exc:
            raise FrameError(f"response frame lacks {exc.args[0]!r}") from None

    def encode(self) -> bytes:
        return _dumps(self.to_wire())

    @property
    def wire_size(self) -> int:
        return HEADER.size + len(self.encode())


def write_frame(sock: socket.socket, payload: bytes) -> None:
    if len(payload) > MAX_FRAME:
        raise FrameError(f"frame of {len(payload)} bytes is too large")
    sock.sendall(HEADER.pack(len(payload)) + payload)


def _read_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionError("peer closed the connection")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes:
    (length,) = HEADER.unpack(_read_exact(sock, HEADER.size))
    if length > MAX_FRAME:
        raise FrameError(f"frame of {length} bytes is too large")
    return _read_exact(sock, length)


def split_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    return host, int(port)


class TcpClient:
    """Frame client with one persistent connection per (thread, endpoint)."""

    def __init__(self, deadline_s: float):
        self.deadline_s = deadline_s
        self._local = threading.local()

    def _conn(self, endpoint: str) -> socket.socket:
        conns = self._local.__dict__.setdefault("conns", {})
        sock = conns.get(endpoint)
        if sock is None:
            try:
                sock = socket.create_connection(split_endpoint(endpoint), timeout=self.deadline_s)
            except socket.timeout:
                raise UpstreamTimeout(f"connect to {endpoint} timed out") from None
            except OSError as exc:
                raise TargetUnreachable(f"{endpoint}: {exc}") from None
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conns[endpoint] = sock
        return sock

    def _drop(self, endpoint: str) -> None:
        sock = self._local.__dict__.get("conns", {}).pop(endpoint, None)
        if sock is not None:
            sock.close()

    def request(self, endpoint: str, msg: SbiMessage, deadline_s: float | None = None) -> SbiResponse:
        deadline_s = self.deadline_s if deadline_s is None else deadline_s
        sock = self._conn(endpoint)
        sock.settimeout(deadline_s)
        try:
            write_frame(sock, msg.encode())
            raw = read_frame(sock)
        except socket.timeout:
            self._drop(endpoint)
            raise UpstreamTimeout(f"{msg.service_op} to {endpoint} exceeded {deadline_s}s") from None
        except OSError as exc:
            self._drop(endpoint)
            raise TargetUnreachable(f"{endpoint}: {exc}") from None
        resp = SbiResponse.from_wire(json.loads(raw))
        if not resp.ok and resp.reason == "UnknownServiceOp":
            raise UnknownServiceOp(f"{msg.service_op} at {msg.target}")
        return resp

    def close(self) -> None:
        for sock in self._local.__dict__.get("conns", {}).values():
            sock.close()
        self._local = threading.local()


class _FrameHandler(socketserver.BaseRequestHandler):
    def handle(self):
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        while True:
            try:
                raw = read_frame(sock)
            except (ConnectionError, OSError, FrameError):
                return
            try:
                msg = SbiMessage.from_wire(json.loads(raw))
                resp = self.server.dispatch(msg)
            except UnknownServiceOp:
                resp = SbiResponse.failure(msg.request_id, "UnknownServiceOp")
            except (ValueError, FrameError) as exc:
                resp = SbiResponse.failure("", f"BadFrame: {exc}")
            if resp is None:
                # unresponsive endpoint: keep the connection open, never answer
                continue
            try:
                write_frame(sock, resp.encode())
            except OSError:
                return


class FrameServer(socketserver.ThreadingTCPServer):
    """Serves framed SBI requests by handing each to ``dispatch``.

    ``dispatch`` returning ``None`` leaves the request unanswered, which the
    caller experiences as a timeout.
    """

    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, host: str, port: int, dispatch: Callable[[SbiMessage], SbiResponse | None]):
        self.dispatch = dispatch
        try:
            super().__init__((host, port), _FrameHandler)
        except OSError as exc:
            raise AddressInUse(f"{host}:{port}: {exc}") from None
        self._thread = threading.Thread(target=self.serve_forever, daemon=True,
                                        name=f"sbi-{host}:{self.port}")

    @property
    def port(self) -> int:
        return self.server_address[1]

    @property
    def endpoint(self) -> str:
        return f"{self.server_address[0]}:{self.port}"

    def start(self) -> FrameServer:
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()

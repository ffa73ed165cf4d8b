"""Desk-scale 5G core: eight VNF actors exchanging SBI messages.

Every VNF serialises the messages it handles behind its own lock, charges the
modeled CPU cost of each handled message, and keeps the contexts the chain
table tells it to store. Upstream targets are resolved through the NRF and
cached for ``discovery_ttl_ms``.
"""

from __future__ import annotations

import csv
import io
import logging
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from corebench.clock import VirtualClock
from corebench.emulator.chains import DEREGISTER, DISCOVER, HANDLERS, HEARTBEAT, REGISTER, Handler, chain_depth
from corebench.emulator.costs import PS_PER_US, ResourceCostModel, load_cost_model
from corebench.emulator.transport import (
    INJECTOR, FrameServer, SbiMessage, SbiResponse, TargetUnreachable, TcpClient,
    UnknownServiceOp, UpstreamTimeout,
)
from corebench.kinds import Direction, VnfKind

logger = logging.getLogger(__name__)

DEFAULT_HEARTBEAT_PERIOD_MS = 10_000
DEFAULT_DISCOVERY_TTL_MS = 60_000
DEFAULT_HOP_DEADLINE_MS = 2_000


class TransportKind(str, Enum):
    IN_PROCESS = "inproc"
    TCP_LOOPBACK = "tcp"


class NotRegistered(Exception):
    pass


class NoSuchSession(Exception):
    pass


@dataclass(frozen=True)
class ResourceSnapshot:
    vnf: VnfKind
    cpu_time_ps: int
    mem_bytes: int
    rx_bytes: int
    tx_bytes: int
    active_contexts: int
    taken_at_ms: float

    @property
    def cpu_time_us(self) -> float:
        return self.cpu_time_ps / PS_PER_US


@dataclass(frozen=True)
class TapEntry:
    seq: int
    t_ms: float
    origin: str
    target: str
    service_op: str
    request_id: str


class MessageTap:
    """Append-only log of every SBI request a VNF received."""

    def __init__(self):
        self._entries: list[TapEntry] = []
        self._lock = threading.Lock()

    def record(self, t_ms: float, msg: SbiMessage) -> None:
        with self._lock:
            self._entries.append(TapEntry(len(self._entries), t_ms, msg.origin, msg.target,
                                          msg.service_op, msg.request_id))

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self, since: int = 0) -> list[TapEntry]:
        with self._lock:
            return self._entries[since:]

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seq", "t_ms", "origin", "target", "service_op", "request_id"])
        for e in self.entries():
            w.writerow([e.seq, repr(float(e.t_ms)), e.origin, e.target, e.service_op, e.request_id])
        if path is not None:
            Path(path).write_text(buf.getvalue())
        return buf.getvalue()


@dataclass
class SessionContext:
    kind: str
    key: str
    supi: str | None
    created_ms: float
    mem_bytes: int
    data: dict[str, Any] = field(default_factory=dict)


@dataclass
class RegistryEntry:
    endpoint: str
    last_heartbeat_ms: float


@dataclass(frozen=True)
class ForwardResult:
    session_key: str
    size_bytes: int
    direction: Direction
    cpu_us: float


class Vnf:
    def __init__(self, kind: VnfKind, emulator: Emulator):
        self.kind = kind
        self.emu = emulator
        self.endpoint = ""
        self.lock = threading.RLock()
        self.contexts: dict[tuple[str, str], SessionContext] = {}
        self.registry: dict[VnfKind, RegistryEntry] = {}
        self.discovery_cache: dict[VnfKind, tuple[str, float]] = {}
        self.last_heartbeat_ms: float | None = None
        self.unresponsive = False
        self.session_stats: dict[str, list[int]] = {}
        self._counters = threading.Lock()
        self._cpu_ps = 0
        self._rx = 0
        self._tx = 0
        self._ctx_mem = 0

    def charge(self, cpu_ps: int = 0, rx: int = 0, tx: int = 0) -> None:
        with self._counters:
            self._cpu_ps += cpu_ps
            self._rx += rx
            self._tx += tx
        if cpu_ps and self.emu.busy_spin:
            _spin(cpu_ps / 1e12)

    def snapshot(self, now_ms: float) -> ResourceSnapshot:
        with self._counters:
            return ResourceSnapshot(self.kind, self._cpu_ps, self.emu.costs.base_mem(self.kind) + self._ctx_mem,
                                    self._rx, self._tx, len(self.contexts), now_ms)

    def handle(self, msg: SbiMessage) -> SbiResponse:
        handler = HANDLERS.get((self.kind, msg.service_op))
        if handler is None:
            raise UnknownServiceOp(f"{msg.service_op} is not served by {self.kind.value}")
        with self.lock:
            self.emu.tap.record(self.emu.clock.now_ms(), msg)
            self.charge(self.emu.costs.step_ps(self.kind, msg.service_op), rx=msg.wire_size)
            if self.kind is VnfKind.NRF:
                resp = self._nrf(msg)
            else:
                resp = self._run_chain(msg, handler)
            self.charge(tx=resp.wire_size)
            return resp

    def _run_chain(self, msg: SbiMessage, handler: Handler) -> SbiResponse:
        stub = msg.origin == INJECTOR and bool(msg.body.get("stub_upstreams"))
        body = {k: v for k, v in msg.body.items() if k != "stub_upstreams"}
        hop = 0
        for target, op in handler.calls:
            hop += 1
            child = SbiMessage(f"{msg.request_id}.{hop}", op, self.kind.value, target.value, msg.supi, body)
            if stub:
                canned = SbiResponse.success(child.request_id)
                self.charge(tx=child.wire_size, rx=canned.wire_size)
                continue
            try:
                endpoint = self.resolve(target, f"{msg.request_id}.{hop}d")
                resp = self.call(endpoint, child)
            except NotRegistered:
                return SbiResponse.failure(msg.request_id, f"NotRegistered: {target.value}")
            except UpstreamTimeout:
                return SbiResponse.failure(msg.request_id, f"UpstreamTimeout: {target.value}")
            except TargetUnreachable:
                return SbiResponse.failure(msg.request_id, f"Unreachable: {target.value}")
            if not resp.ok:
                return SbiResponse.failure(msg.request_id, resp.reason or "upstream failure")

        if handler.stores or handler.releases:
            key = msg.body.get("session_key") if handler.key == "session" else msg.supi
            if key is None:
                return SbiResponse.failure(msg.request_id, f"missing {handler.key} key")
            if handler.stores:
                self._store(handler.stores, str(key), msg)
            else:
                if not self._release(handler.releases, str(key)):
                    return SbiResponse.failure(msg.request_id, "NoSuchSession")
        return SbiResponse.success(msg.request_id)

    def _store(self, kind: str, key: str, msg: SbiMessage) -> None:
        if (kind, key) in self.contexts:
            return
        nbytes = self.emu.costs.context_bytes(self.kind, kind)
        self.contexts[(kind, key)] = SessionContext(kind, key, msg.supi, self.emu.clock.now_ms(), nbytes)
        with self._counters:
            self._ctx_mem += nbytes

    def _release(self, kind: str, key: str) -> bool:
        ctx = self.contexts.pop((kind, key), None)
        if ctx is None:
            return False
        self.session_stats.pop(key, None)
        with self._counters:
            self._ctx_mem -= ctx.mem_bytes
        return True

    def call(self, endpoint: str, msg: SbiMessage) -> SbiResponse:
        self.charge(tx=msg.wire_size)
        resp = self.emu.deliver(endpoint, msg)
        self.charge(rx=resp.wire_size)
        return resp

    def resolve(self, wanted: VnfKind, request_id: str) -> str:
        now = self.emu.clock.now_ms()
        cached = self.discovery_cache.get(wanted)
        if cached is not None and cached[1] > now:
            return cached[0]
        req = SbiMessage(request_id, DISCOVER, self.kind.value, VnfKind.NRF.value, None,
                         {"wanted": wanted.value})
        resp = self.call(self.emu.vnfs[VnfKind.NRF].endpoint, req)
        if not resp.ok:
            raise NotRegistered(f"{wanted.value} is not registered")
        self.discovery_cache[wanted] = (resp.body["endpoint"], now + self.emu.discovery_ttl_ms)
        return resp.body["endpoint"]

    def _nrf(self, msg: SbiMessage) -> SbiResponse:
        now = self.emu.clock.now_ms()
        op = msg.service_op
        origin = VnfKind(msg.origin) if msg.origin in VnfKind.__members__ else None
        if op == DISCOVER:
            try:
                entry = self.registry.get(VnfKind(msg.body.get("wanted")))
            except ValueError:
                entry = None
            if entry is None:
                return SbiResponse.failure(msg.request_id, "NotRegistered")
            return SbiResponse.success(msg.request_id, endpoint=entry.endpoint)
        if op == REGISTER and origin is not None:
            self.registry[origin] = RegistryEntry(str(msg.body.get("endpoint", "")), now)
        elif op == DEREGISTER and origin is not None:
            self.registry.pop(origin, None)
        elif op == HEARTBEAT and origin in self.registry:
            self.registry[origin].last_heartbeat_ms = now
        return SbiResponse.success(msg.request_id)


def _spin(seconds: float) -> None:
    end = time.perf_counter() + seconds
    while time.perf_counter() < end:
        pass


class Emulator:
    """Handle on a running emulated core; build it with :func:`start_emulator`."""

    def __init__(self, cost_model: ResourceCostModel, transport: TransportKind, clock,
                 heartbeat_period_ms: int, discovery_ttl_ms: int, hop_deadline_ms: int,
                 host: str, base_port: int | None, busy_spin: bool):
        self.costs = cost_model
        self.transport = TransportKind(transport)
        self.clock = clock
        self.heartbeat_period_ms = heartbeat_period_ms
        self.discovery_ttl_ms = discovery_ttl_ms
        self.hop_deadline_ms = hop_deadline_ms
        self.busy_spin = busy_spin
        self.tap = MessageTap()
        self.vnfs: dict[VnfKind, Vnf] = {kind: Vnf(kind, self) for kind in VnfKind}
        self._by_endpoint: dict[str, Vnf] = {}
        self._servers: list[FrameServer] = []
        self._client: TcpClient | None = None
        self._hb_seq = 0
        self._host = host
        self._base_port = base_port
        self.running = False

    def _start(self) -> None:
        if self.transport is TransportKind.TCP_LOOPBACK:
            self._client = TcpClient(self.hop_deadline_ms / 1000.0)
            try:
                for i, vnf in enumerate(self.vnfs.values()):
                    port = 0 if self._base_port is None else self._base_port + i
                    server = FrameServer(self._host, port, self._dispatcher(vnf)).start()
                    self._servers.append(server)
                    vnf.endpoint = server.endpoint
            except Exception:
                self.stop()
                raise
        else:
            for vnf in self.vnfs.values():
                vnf.endpoint = f"inproc://{vnf.kind.value}"
        self._by_endpoint = {v.endpoint: v for v in self.vnfs.values()}
        self.running = True
        nrf = self.vnfs[VnfKind.NRF]
        for kind, vnf in self.vnfs.items():
            if kind is VnfKind.NRF:
                continue
            with vnf.lock:
                msg = SbiMessage(f"reg.{kind.value}", REGISTER, kind.value, VnfKind.NRF.value,
                                 None, {"endpoint": vnf.endpoint})
                vnf.call(nrf.endpoint, msg)
                vnf.last_heartbeat_ms = self.clock.now_ms()

    @staticmethod
    def _dispatcher(vnf: Vnf):
        def dispatch(msg: SbiMessage) -> SbiResponse | None:
            return None if vnf.unresponsive else vnf.handle(msg)
        return dispatch

    def __enter__(self) -> Emulator:
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    def stop(self) -> None:
        for server in self._servers:
            server.stop()
        self._servers.clear()
        if self._client is not None:
            self._client.close()
        self.running = False

    @property
    def endpoints(self) -> dict[VnfKind, str]:
        return {k: v.endpoint for k, v in self.vnfs.items()}

    def deliver(self, endpoint: str, msg: SbiMessage) -> SbiResponse:
        vnf = self._by_endpoint.get(endpoint)
        if self.transport is TransportKind.TCP_LOOPBACK:
            # a caller waits one hop deadline per level of nesting below it, so the
            # innermost caller of a silent VNF times out first and reports failure upward
            depth = chain_depth(vnf.kind, msg.service_op) if vnf is not None else 1
            return self._client.request(endpoint, msg, self.hop_deadline_ms * depth / 1000.0)
        if vnf is None:
            raise TargetUnreachable(endpoint)
        if vnf.unresponsive:
            raise UpstreamTimeout(f"{vnf.kind.value} did not answer within {self.hop_deadline_ms} ms")
        return vnf.handle(msg)

    def submit(self, entry: VnfKind, service_op: str, request_id: str, supi: str | None = None,
               body: dict[str, Any] | None = None) -> SbiResponse:
        """Send one request from the load injector to ``entry`` over the transport."""
        msg = SbiMessage(request_id, service_op, INJECTOR, entry.value, supi, dict(body or {}))
        return self.deliver(self.vnfs[entry].endpoint, msg)

    def handle_sbi(self, vnf: VnfKind, msg: SbiMessage) -> SbiResponse:
        return self.vnfs[vnf].handle(msg)

    def nrf_discover(self, requester: VnfKind, wanted: VnfKind) -> str:
        vnf = self.vnfs[requester]
        with vnf.lock:
            return vnf.resolve(wanted, f"disc.{requester.value}.{wanted.value}.{len(self.tap)}")

    def deregister(self, kind: VnfKind) -> None:
        vnf = self.vnfs[kind]
        with vnf.lock:
            vnf.call(self.vnfs[VnfKind.NRF].endpoint,
                     SbiMessage(f"dereg.{kind.value}", DEREGISTER, kind.value, VnfKind.NRF.value))

    def registered(self) -> set[VnfKind]:
        return set(self.vnfs[VnfKind.NRF].registry)

    def heartbeat_tick(self, now_ms: float | None = None) -> int:
        """Send a HEARTBEAT to the NRF from every registered VNF whose period elapsed."""
        now = self.clock.now_ms() if now_ms is None else now_ms
        nrf = self.vnfs[VnfKind.NRF]
        sent = 0
        for kind in VnfKind:
            vnf = self.vnfs[kind]
            if kind is VnfKind.NRF or kind not in nrf.registry or vnf.unresponsive:
                continue
            if vnf.last_heartbeat_ms is not None and now - vnf.last_heartbeat_ms < self.heartbeat_period_ms:
                continue
            with vnf.lock:
                self._hb_seq += 1
                vnf.charge(self.costs.step_ps(kind, HEARTBEAT))
                msg = SbiMessage(f"hb.{self._hb_seq}", HEARTBEAT, kind.value, VnfKind.NRF.value)
                try:
                    vnf.call(nrf.endpoint, msg)
                except (UpstreamTimeout, TargetUnreachable):
                    logger.warning("heartbeat from %s to NRF failed", kind.value)
                vnf.last_heartbeat_ms = now
                sent += 1
        return sent

    def _upf(self) -> Vnf:
        return self.vnfs[VnfKind.UPF]

    def has_session(self, session_key: str) -> bool:
        return ("n4_session", session_key) in self._upf().contexts

    def establish_session(self, session_key: str, supi: str | None = None) -> None:
        """Install a UPF session context directly, bypassing signaling (test fixture)."""
        upf = self._upf()
        with upf.lock:
            upf._store("n4_session", session_key,
                       SbiMessage("fixture", "N4_SESSION_ESTABLISH", INJECTOR, "UPF", supi))

    def release_session(self, session_key: str) -> SbiResponse:
        return self.submit(VnfKind.UPF, "N4_SESSION_RELEASE", f"rel.{session_key}",
                           body={"session_key": session_key})

    def upf_ingest(self, session_key: str, size_bytes: int, direction: Direction) -> ForwardResult:
        upf = self._upf()
        if ("n4_session", session_key) not in upf.contexts:
            raise NoSuchSession(session_key)
        direction = Direction(direction)
        cost = self.costs.packets_cost_ps(1, size_bytes)
        upf.charge(cost, rx=size_bytes, tx=size_bytes)
        dn = self.vnfs[VnfKind.DN]
        if direction is Direction.UPLINK:
            dn.charge(rx=size_bytes)
        else:
            dn.charge(tx=size_bytes)
        with upf._counters:
            stats = upf.session_stats.setdefault(session_key, [0, 0])
            stats[0] += 1
            stats[1] += size_bytes
        return ForwardResult(session_key, size_bytes, direction, cost / PS_PER_US)

    def upf_ingest_bulk(self, packets: int, bytes_ul: int, bytes_dl: int) -> None:
        """Charge an aggregate of already-validated packets in one step."""
        if packets == 0 and bytes_ul == 0 and bytes_dl == 0:
            return
        total = bytes_ul + bytes_dl
        self._upf().charge(self.costs.packets_cost_ps(packets, total), rx=total, tx=total)
        self.vnfs[VnfKind.DN].charge(rx=bytes_ul, tx=bytes_dl)

    def credit_session(self, session_key: str, packets: int, nbytes: int) -> None:
        upf = self._upf()
        with upf._counters:
            stats = upf.session_stats.setdefault(session_key, [0, 0])
            stats[0] += packets
            stats[1] += nbytes

    def snapshot(self, vnf: VnfKind) -> ResourceSnapshot:
        return self.vnfs[vnf].snapshot(self.clock.now_ms())

    def set_unresponsive(self, vnf: VnfKind, flag: bool = True) -> None:
        self.vnfs[vnf].unresponsive = flag


def start_emulator(cost_model: ResourceCostModel | None = None,
                   transport: TransportKind | str = TransportKind.IN_PROCESS, *,
                   clock=None,
                   heartbeat_period_ms: int = DEFAULT_HEARTBEAT_PERIOD_MS,
                   discovery_ttl_ms: int = DEFAULT_DISCOVERY_TTL_MS,
                   hop_deadline_ms: int = DEFAULT_HOP_DEADLINE_MS,
                   host: str = "127.0.0.1", base_port: int | None = None,
                   busy_spin: bool = False) -> Emulator:
    """Bring up all eight VNFs and register every non-NRF VNF with the NRF.

    ``base_port=None`` lets the OS pick ports on the TCP transport; a fixed
    base binds VNF *i* to ``base_port + i`` and raises ``AddressInUse`` on
    conflicts.
    """
    emu = Emulator(cost_model or load_cost_model(), TransportKind(transport), clock or VirtualClock(),
                   heartbeat_period_ms, discovery_ttl_ms, hop_deadline_ms, host, base_port, busy_spin)
    emu._start()
    return emu

"""Control-plane load injector.

Requests are fired open-loop at their scheduled offsets whatever the target
is doing. Subscribers are drawn round-robin from a pool of ``ue_count``
SUPIs spread over ``gnb_count`` emulated base stations.
"""

from __future__ import annotations

import csv
import io
import logging
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Protocol

from corebench.arrivals import EventSchedule
from corebench.emulator.chains import entry_requests
from corebench.emulator.transport import (
    INJECTOR, SbiMessage, SbiResponse, TargetUnreachable, TcpClient, UpstreamTimeout,
)
from corebench.kinds import ProcedureKind, VnfKind
from corebench.scenario import ProcedureLoad

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_MS = 5_000
CP_SUPI_PREFIX = "imsi-00101"


def supi_for(index: int, prefix: str = CP_SUPI_PREFIX) -> str:
    return f"{prefix}{index + 1:010d}"


class Status(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class RequestOutcome:
    request_id: str
    procedure: ProcedureKind
    supi: str
    t_start_ms: float
    t_end_ms: float
    status: Status
    reason: str | None = None


@dataclass(frozen=True)
class EventMark:
    t_ms: float
    kind: str
    procedure: str
    request_id: str
    status: str


class InjectionAborted(TargetUnreachable):
    """The target went away mid-run; ``outcomes`` holds every event, unfired ones flagged."""

    def __init__(self, msg: str, outcomes: list[RequestOutcome]):
        super().__init__(msg)
        self.outcomes = outcomes


class Target(Protocol):
    def submit(self, entry: VnfKind, service_op: str, request_id: str, supi: str | None = None,
               body: dict[str, Any] | None = None) -> SbiResponse: ...


class ExternalTarget:
    """A core reached over the framed TCP protocol at the given endpoints."""

    def __init__(self, endpoints: dict[VnfKind, str], timeout_ms: int = DEFAULT_TIMEOUT_MS):
        self.endpoints = dict(endpoints)
        self._client = TcpClient(timeout_ms / 1000.0)

    def submit(self, entry: VnfKind, service_op: str, request_id: str, supi: str | None = None,
               body: dict[str, Any] | None = None) -> SbiResponse:
        try:
            endpoint = self.endpoints[entry]
        except KeyError:
            raise TargetUnreachable(f"no endpoint configured for {entry.value}") from None
        msg = SbiMessage(request_id, service_op, INJECTOR, entry.value, supi, dict(body or {}))
        return self._client.request(endpoint, msg)

    def close(self) -> None:
        self._client.close()


class ControlInjector:
    """Fires one procedure load; each call to :meth:`fire` is one scheduled event."""

    def __init__(self, target: Target, load: ProcedureLoad, *, request_prefix: str = "cp",
                 timeout_ms: int = DEFAULT_TIMEOUT_MS):
        self.target = target
        self.load = load
        self.entries = entry_requests(load.procedure, load.target_vnf)
        self.prefix = request_prefix
        self.timeout_ms = timeout_ms
        self._psi: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    def subscriber(self, index: int) -> tuple[str, int]:
        ue = index % self.load.ue_count
        return supi_for(ue), ue % self.load.gnb_count

    def _body(self, supi: str, gnb: int) -> dict[str, Any]:
        body: dict[str, Any] = {"gnb_id": gnb}
        if self.load.stub_upstreams:
            body["stub_upstreams"] = True
        if self.load.procedure is ProcedureKind.PDU_SESSION_SETUP:
            with self._lock:
                self._psi[supi] += 1
                psi = self._psi[supi]
            body["pdu_session_id"] = psi
            body["session_key"] = f"{supi}:{psi}"
        elif self.load.procedure is ProcedureKind.NRF_DISCOVERY:
            body["wanted"] = VnfKind.AMF.value
        return body

    def fire(self, index: int, clock) -> RequestOutcome:
        supi, gnb = self.subscriber(index)
        body = self._body(supi, gnb)
        request_id = f"{self.prefix}{index}"
        t_start = clock.now_ms()
        cpu_before = _modeled_cpu(self.target)
        status, reason = Status.SUCCESS, None
        for hop, (vnf, op) in enumerate(self.entries):
            rid = request_id if len(self.entries) == 1 else f"{request_id}-{hop}"
            try:
                resp = self.target.submit(vnf, op, rid, supi, body)
            except UpstreamTimeout as exc:
                status, reason = Status.TIMEOUT, str(exc)
                break
            if not resp.ok:
                status, reason = Status.FAILURE, resp.reason
                break
        if getattr(clock, "virtual", False):
            # no real time passes on a virtual clock: latency is the chain's modeled CPU
            if status is Status.TIMEOUT:
                t_end = t_start + self.timeout_ms
            else:
                t_end = t_start + (_modeled_cpu(self.target) - cpu_before) / 1e9
        else:
            t_end = clock.now_ms()
        return RequestOutcome(request_id, self.load.procedure, supi, t_start, t_end, status, reason)


def _modeled_cpu(target) -> int:
    vnfs = getattr(target, "vnfs", None)
    if vnfs is None:
        return 0
    return sum(v.snapshot(0).cpu_time_ps for v in vnfs.values())


def inject_control(target: Target, load: ProcedureLoad, schedule: EventSchedule, clock, *,
                   start_ms: float = 0.0, workers: int = 32, timeout_ms: int = DEFAULT_TIMEOUT_MS,
                   request_prefix: str = "cp") -> list[RequestOutcome]:
    """Fire every scheduled event against ``target`` and return one outcome each.

    On a virtual clock events run inline in schedule order. On a wall clock a
    scheduler thread hands events to a bounded worker pool at their fire times.

    Raises:
        InjectionAborted: the target became unreachable; carries all outcomes.
    """
    injector = ControlInjector(target, load, request_prefix=request_prefix, timeout_ms=timeout_ms)
    times = [start_ms + int(t) for t in schedule.t_ms]
    outcomes: list[RequestOutcome | None] = [None] * len(times)

    def aborted(exc: Exception) -> InjectionAborted:
        filled = [o if o is not None else RequestOutcome(
            f"{request_prefix}{i}", load.procedure, injector.subscriber(i)[0], times[i], times[i],
            Status.FAILURE, "aborted") for i, o in enumerate(outcomes)]
        return InjectionAborted(str(exc), _sorted(filled))

    if getattr(clock, "virtual", False):
        for i, t in enumerate(times):
            clock.advance_to(t)
            try:
                outcomes[i] = injector.fire(i, clock)
            except TargetUnreachable as exc:
                raise aborted(exc) from exc
        return _sorted(outcomes)

    failure: list[Exception] = []

    def run(i: int) -> None:
        if failure:
            return
        try:
            outcomes[i] = injector.fire(i, clock)
        except TargetUnreachable as exc:
            failure.append(exc)

    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="cpli") as pool:
        for i, t in enumerate(times):
            if failure:
                break
            clock.sleep_until(t)
            pool.submit(run, i)
    if failure:
        raise aborted(failure[0])
    return _sorted(outcomes)


def _sorted(outcomes: Iterable[RequestOutcome]) -> list[RequestOutcome]:
    return sorted(outcomes, key=lambda o: o.t_start_ms)


def emit_event_marks(outcomes: Iterable[RequestOutcome]) -> list[EventMark]:
    """A start and an end mark per outcome, time-sorted; both carry the outcome status."""
    marks = []
    for o in outcomes:
        marks.append(EventMark(o.t_start_ms, "start", o.procedure.value, o.request_id, o.status.value))
        marks.append(EventMark(o.t_end_ms, "end", o.procedure.value, o.request_id, o.status.value))
    return sorted(marks, key=lambda m: m.t_ms)


OUTCOME_HEADER = ["request_id", "procedure", "supi", "t_start_ms", "t_end_ms", "status"]


def outcomes_to_csv(outcomes: Iterable[RequestOutcome], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTCOME_HEADER)
    for o in outcomes:
        w.writerow([o.request_id, o.procedure.value, o.supi, repr(float(o.t_start_ms)),
                    repr(float(o.t_end_ms)), o.status.value])
    if path is not None:
        Path(path).write_text(buf.getvalue())
    return buf.getvalue()


def read_outcomes(path: str | Path) -> list[RequestOutcome]:
    with open(path, newline="") as fh:
        return [RequestOutcome(r["request_id"], ProcedureKind(r["procedure"]), r["supi"],
                               float(r["t_start_ms"]), float(r["t_end_ms"]), Status(r["status"]))
                for r in csv.DictReader(fh)]


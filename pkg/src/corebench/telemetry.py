"""Per-VNF resource sampling, rate conversion and event alignment.

A sample taken at ``t`` describes the interval that ends at ``t``: its CPU
rate and byte deltas are computed against the previous sample of the same
VNF. Samples are phase-tagged by the phase in which that interval starts.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from corebench.clock import VirtualClock
from corebench.cpli import EventMark
from corebench.emulator.core import ResourceSnapshot
from corebench.kinds import VnfKind

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TELEMETRY_HEADER = ["t_ms", "vnf", "cpu_millicores", "mem_bytes", "rx_bytes_delta",
                    "tx_bytes_delta", "active_contexts"]
EVENTS_HEADER = ["t_ms", "kind", "procedure", "request_id", "status", "phase"]
MIN_INTERVAL_MS = 100


class TelemetryError(Exception):
    pass


class NonMonotoneCounter(TelemetryError):
    pass


class BackendUnavailable(TelemetryError):
    pass


class ClockSkew(TelemetryError):
    pass


class Backend(str, Enum):
    EMULATOR_COUNTERS = "EmulatorCounters"
    HOST_PROCESS_STATS = "HostProcessStats"


@dataclass(frozen=True)
class TelemetrySample:
    t_ms: float
    vnf: VnfKind
    cpu_millicores: float
    mem_bytes: int
    rx_bytes_delta: int
    tx_bytes_delta: int
    active_contexts: int


@dataclass(frozen=True)
class Phase:
    name: str
    start_ms: float
    end_ms: float

    def contains(self, t_ms: float) -> bool:
        return self.start_ms <= t_ms < self.end_ms


def compute_millicores(prev: ResourceSnapshot, curr: ResourceSnapshot) -> float:
    """CPU rate between two snapshots; 1000 millicores is one fully busy core."""
    dt_ms = curr.taken_at_ms - prev.taken_at_ms
    if dt_ms <= 0:
        raise ValueError("snapshots must be strictly time-ordered")
    d_ps = curr.cpu_time_ps - prev.cpu_time_ps
    if d_ps < 0:
        raise NonMonotoneCounter(f"{curr.vnf.value} CPU counter went backwards")
    # 1000 * d_us / (dt_ms * 1000) == d_us / dt_ms, with d_us = d_ps / 1e6
    return d_ps / (dt_ms * 1e6)


def _sample(prev: ResourceSnapshot | None, curr: ResourceSnapshot) -> TelemetrySample:
    if prev is None:
        return TelemetrySample(curr.taken_at_ms, curr.vnf, 0.0, curr.mem_bytes, 0, 0, curr.active_contexts)
    drx, dtx = curr.rx_bytes - prev.rx_bytes, curr.tx_bytes - prev.tx_bytes
    if drx < 0 or dtx < 0:
        raise NonMonotoneCounter(f"{curr.vnf.value} byte counter went backwards")
    return TelemetrySample(curr.taken_at_ms, curr.vnf, compute_millicores(prev, curr), curr.mem_bytes,
                           drx, dtx, curr.active_contexts)


class EmulatorCounters:
    def __init__(self, emulator):
        self.emulator = emulator

    def check(self, vnf: VnfKind) -> None:
        if vnf not in self.emulator.vnfs:
            raise BackendUnavailable(f"emulator has no {vnf.value}")

    def read(self, vnf: VnfKind, now_ms: float) -> ResourceSnapshot:
        return self.emulator.vnfs[vnf].snapshot(now_ms)


class HostProcessStats:
    """OS-level per-process counters for VNFs running as host processes.

    Network bytes are approximated by the process's read/write I/O counters
    where the platform exposes them.
    """

    def __init__(self, pids: Mapping[VnfKind, int]):
        import psutil

        self._psutil = psutil
        self.pids = dict(pids)
        self._procs: dict[VnfKind, Any] = {}

    def check(self, vnf: VnfKind) -> None:
        pid = self.pids.get(vnf)
        if pid is None:
            raise BackendUnavailable(f"no pid configured for {vnf.value}")
        try:
            self._procs[vnf] = self._psutil.Process(pid)
        except self._psutil.Error as exc:
            raise BackendUnavailable(f"{vnf.value} (pid {pid}): {exc}") from None

    def read(self, vnf: VnfKind, now_ms: float) -> ResourceSnapshot:
        proc = self._procs[vnf]
        try:
            with proc.oneshot():
                cpu = proc.cpu_times()
                rss = proc.memory_info().rss
                try:
                    io_ = proc.io_counters()
                    rx, tx = io_.read_bytes, io_.write_bytes
                except (AttributeError, self._psutil.AccessDenied):
                    rx = tx = 0
                threads = proc.num_threads()
        except self._psutil.Error as exc:
            raise BackendUnavailable(f"{vnf.value}: {exc}") from None
        cpu_ps = round((cpu.user + cpu.system) * 1e12)
        return ResourceSnapshot(vnf, cpu_ps, rss, rx, tx, threads, now_ms)


class Collector:
    """Samples every configured VNF once per interval.

    On a virtual clock the owner calls :meth:`tick` at each interval boundary;
    on a wall clock :meth:`start` runs a sampler thread.
    """

    def __init__(self, backend, vnfs: Sequence[VnfKind], interval_ms: int, clock):
        if interval_ms < MIN_INTERVAL_MS:
            raise ValueError(f"telemetry interval must be >= {MIN_INTERVAL_MS} ms")
        self.backend = backend
        self.vnfs = list(vnfs)
        self.interval_ms = interval_ms
        self.clock = clock
        self._prev: dict[VnfKind, ResourceSnapshot] = {}
        self._samples: list[TelemetrySample] = []
        self._last_ms: float | None = None
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        for vnf in self.vnfs:
            backend.check(vnf)

    def tick(self, now_ms: float | None = None) -> list[TelemetrySample]:
        now = self.clock.now_ms() if now_ms is None else now_ms
        taken = []
        for vnf in self.vnfs:
            snap = self.backend.read(vnf, now)
            taken.append(_sample(self._prev.get(vnf), snap))
            self._prev[vnf] = snap
        self._last_ms = now
        with self._lock:
            self._samples.extend(taken)
        return taken

    def tick_until(self, end_ms: float) -> None:
        """Advance a virtual clock to ``end_ms``, sampling at each interval boundary after the last sample."""
        t = self.clock.now_ms() if self._last_ms is None else self._last_ms
        while t + self.interval_ms <= end_ms:
            t += self.interval_ms
            self.clock.advance_to(t)
            self.tick()

    def start(self) -> Collector:
        self.tick()
        if not getattr(self.clock, "virtual", False):
            self._thread = threading.Thread(target=self._run, daemon=True, name="telemetry")
            self._thread.start()
        return self

    def _run(self) -> None:
        next_t = self.clock.now_ms() + self.interval_ms
        while not self._stop.is_set():
            self.clock.sleep_until(next_t)
            if self._stop.is_set():
                break
            try:
                self.tick(next_t)
            except BackendUnavailable as exc:
                logger.error("telemetry backend lost: %s", exc)
                break
            next_t += self.interval_ms

    def stop(self) -> list[TelemetrySample]:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
        return self.samples

    @property
    def samples(self) -> list[TelemetrySample]:
        with self._lock:
            return list(self._samples)


def start_collector(backend: Backend | str, vnfs: Sequence[VnfKind], interval_ms: int, *,
                    emulator=None, pids: Mapping[VnfKind, int] | None = None, clock=None) -> Collector:
    """Create a collector and take its first sample immediately."""
    kind = Backend(backend)
    if kind is Backend.EMULATOR_COUNTERS:
        if emulator is None:
            raise BackendUnavailable("EmulatorCounters needs a running emulator")
        impl = EmulatorCounters(emulator)
        clock = clock or emulator.clock
    else:
        impl = HostProcessStats(pids or {})
        clock = clock or VirtualClock()
    return Collector(impl, vnfs, interval_ms, clock).start()


@dataclass(frozen=True, eq=False)
class AlignedDataset:
    samples: tuple[TelemetrySample, ...]
    sample_phases: tuple[str, ...]
    events: tuple[EventMark, ...]
    event_phases: tuple[str, ...]
    phases: tuple[Phase, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AlignedDataset):
            return NotImplemented
        return (self.samples, self.sample_phases, self.events, self.event_phases, self.phases,
                self.metadata) == (other.samples, other.sample_phases, other.events,
                                   other.event_phases, other.phases, other.metadata)

    @property
    def interval_ms(self) -> int:
        return int(self.metadata.get("interval_ms", 1000))

    def phase(self, name: str) -> Phase:
        for p in self.phases:
            if p.name == name:
                return p
        raise KeyError(name)

    def for_vnf(self, vnf: VnfKind, phase: str | None = None) -> list[TelemetrySample]:
        return [s for s, ph in zip(self.samples, self.sample_phases)
                if s.vnf is vnf and (phase is None or ph == phase)]


def _phase_of(t_ms: float, phases: Sequence[Phase]) -> str | None:
    for p in phases:
        if p.contains(t_ms):
            return p.name
    if phases and t_ms == phases[-1].end_ms:
        return phases[-1].name
    return None


def align(samples: Iterable[TelemetrySample], events: Iterable[EventMark], phases: Sequence[Phase], *,
          interval_ms: int = 1000, metadata: Mapping[str, Any] | None = None) -> AlignedDataset:
    """Merge samples and event marks into one phase-annotated dataset.

    Raises:
        ClockSkew: an event or sample lies outside the experiment span.
    """
    phases = tuple(sorted(phases, key=lambda p: p.start_ms))
    for a, b in zip(phases, phases[1:]):
        if a.end_ms > b.start_ms:
            raise ValueError(f"phases {a.name} and {b.name} overlap")
    order = {v: i for i, v in enumerate(VnfKind)}
    samples = sorted(samples, key=lambda s: (s.t_ms, order[s.vnf]))
    events = sorted(events, key=lambda e: e.t_ms)

    sample_phases = []
    for s in samples:
        ph = _phase_of(max(s.t_ms - interval_ms, phases[0].start_ms), phases) if phases else None
        if ph is None or s.t_ms > phases[-1].end_ms:
            raise ClockSkew(f"sample at {s.t_ms} ms is outside the experiment span")
        sample_phases.append(ph)
    event_phases = []
    for e in events:
        ph = _phase_of(e.t_ms, phases)
        if ph is None:
            raise ClockSkew(f"event {e.request_id} at {e.t_ms} ms is outside the experiment span")
        event_phases.append(ph)

    meta = dict(metadata or {})
    meta["interval_ms"] = interval_ms
    return AlignedDataset(tuple(samples), tuple(sample_phases), tuple(events), tuple(event_phases),
                          phases, meta)


def _telemetry_csv(ds: AlignedDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TELEMETRY_HEADER)
    for s in ds.samples:
        w.writerow([repr(float(s.t_ms)), s.vnf.value, repr(float(s.cpu_millicores)), s.mem_bytes,
                    s.rx_bytes_delta, s.tx_bytes_delta, s.active_contexts])
    return buf.getvalue()


def _events_csv(ds: AlignedDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENTS_HEADER)
    for e, ph in zip(ds.events, ds.event_phases):
        w.writerow([repr(float(e.t_ms)), e.kind, e.procedure, e.request_id, e.status, ph])
    return buf.getvalue()


def export_csv(dataset: AlignedDataset, out_dir: str | Path) -> dict[str, Any]:
    """Write telemetry.csv, events.csv and manifest.json; returns the manifest.

    Output is byte-stable: the same dataset always yields identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"telemetry.csv": _telemetry_csv(dataset), "events.csv": _events_csv(dataset)}
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "scenario": dataset.metadata.get("scenario"),
        "scenario_hash": dataset.metadata.get("scenario_hash"),
        "seed": dataset.metadata.get("seed"),
        "interval_ms": dataset.interval_ms,
        "phases": [{"name": p.name, "start_ms": p.start_ms, "end_ms": p.end_ms} for p in dataset.phases],
        "metadata": {k: v for k, v in sorted(dataset.metadata.items())
                     if k not in {"scenario", "scenario_hash", "seed", "interval_ms"}},
        "files": {},
    }
    for name, text in files.items():
        data = text.encode()
        (out / name).write_bytes(data)
        manifest["files"][name] = {"sha256": hashlib.sha256(data).hexdigest(),
                                   "rows": text.count("\n") - 1}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(out_dir: str | Path) -> dict[str, Any]:
    return json.loads((Path(out_dir) / "manifest.json").read_text())


def read_samples(path: str | Path) -> list[TelemetrySample]:
    with open(path, newline="") as fh:
        return [TelemetrySample(float(r["t_ms"]), VnfKind(r["vnf"]), float(r["cpu_millicores"]),
                                int(r["mem_bytes"]), int(r["rx_bytes_delta"]), int(r["tx_bytes_delta"]),
                                int(r["active_contexts"]))
                for r in csv.DictReader(fh)]


def import_dataset(out_dir: str | Path) -> AlignedDataset:
    """Rebuild an exported dataset from its three files."""
    out = Path(out_dir)
    manifest = read_manifest(out)
    phases = tuple(Phase(p["name"], p["start_ms"], p["end_ms"]) for p in manifest["phases"])
    samples = read_samples(out / "telemetry.csv")
    events, event_phases = [], []
    with open(out / "events.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            events.append(EventMark(float(r["t_ms"]), r["kind"], r["procedure"], r["request_id"], r["status"]))
            event_phases.append(r["phase"])
    meta = dict(manifest.get("metadata", {}))
    meta.update(scenario=manifest["scenario"], scenario_hash=manifest["scenario_hash"], seed=manifest["seed"])
    interval = manifest["interval_ms"]
    sample_phases = [_phase_of(max(s.t_ms - interval, phases[0].start_ms), phases) for s in samples]
    meta["interval_ms"] = interval
    return AlignedDataset(tuple(samples), tuple(sample_phases), tuple(events), tuple(event_phases),
                          phases, meta)

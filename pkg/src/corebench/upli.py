"""User-plane load injector.

Sessions are planned by sampling each one's service from a :class:`ServiceMix`
and then replayed through the UPF, either from a binned trace profile or
from a synthetic :class:`FlowSpec`.

Trace bins are packetized by ceiling division: a bin carrying ``b`` bytes in
one direction becomes ``ceil(b / mtu)`` packets evenly spaced across the bin,
all full-size except the last, which carries the remainder.

Delivery to the UPF is aggregated per time bucket rather than per packet.
The UPF cost is linear in packets and bytes, so charging a bucket's totals
is exactly equivalent to charging each packet; packets are still assigned
to buckets by their individual timestamps.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from corebench.arrivals import EventSchedule, make_rng
from corebench.datasets import ServiceMix, ServiceTraceProfile
from corebench.kinds import Direction
from corebench.scenario import DEFAULT_MTU, FlowSpec

UP_SUPI_PREFIX = "imsi-00102"

FlowSource = Union[FlowSpec, ServiceTraceProfile]


class MissingSource(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SessionPlan:
    index: int
    supi: str
    service: str
    source: FlowSource
    start_ms: int
    duration_s: float

    @property
    def session_key(self) -> str:
        return f"{self.supi}:1"

    @property
    def end_ms(self) -> int:
        return self.start_ms + int(round(self.duration_s * 1000))


@dataclass(frozen=True)
class Packet:
    t_ms: float
    size_bytes: int
    direction: Direction


def natural_duration_s(source: FlowSource) -> float:
    return float(source.duration_s)


def plan_sessions(count: int, mix: ServiceMix, sources: Mapping[str, FlowSource],
                  schedule: EventSchedule, seed: int, *, start_offset_ms: int = 0,
                  session_duration_s: float | None = None) -> list[SessionPlan]:
    """One plan per schedule event; services drawn from ``mix`` by inverse CDF.

    Session ``i`` starts at event ``i`` (plus ``start_offset_ms``) and gets a
    unique SUPI.
    """
    if len(schedule) != count:
        raise ValueError(f"schedule has {len(schedule)} events for {count} sessions")
    missing = [s for s in mix.nonzero() if s not in sources]
    if missing:
        raise MissingSource(f"no flow source for {', '.join(missing)}")
    services = mix.services
    cdf = np.cumsum(mix.probabilities)
    cdf[-1] = 1.0
    u = make_rng(seed, 3).random(count)
    picks = np.minimum(np.searchsorted(cdf, u, side="right"), len(services) - 1)

    plans = []
    for i in range(count):
        service = services[picks[i]]
        src = sources[service]
        duration = session_duration_s if session_duration_s is not None else natural_duration_s(src)
        plans.append(SessionPlan(i, f"{UP_SUPI_PREFIX}{i + 1:010d}", service, src,
                                 start_offset_ms + int(schedule.t_ms[i]), float(duration)))
    return plans


def _packetize(nbytes: np.ndarray, bin_ms: float, mtu: int) -> tuple[np.ndarray, np.ndarray]:
    counts = -(-nbytes // mtu)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    bins = np.repeat(np.arange(nbytes.size), counts)
    first = np.concatenate(([0], np.cumsum(counts)[:-1]))
    k = np.arange(total) - np.repeat(first, counts)
    n = counts[bins]
    offsets = bins * bin_ms + k * (bin_ms / n)
    sizes = np.full(total, mtu, dtype=np.int64)
    last = k == n - 1
    sizes[last] = nbytes[bins[last]] - (n[last] - 1) * mtu
    return offsets, sizes


def trace_packets(profile: ServiceTraceProfile, duration_ms: float,
                  mtu: int = DEFAULT_MTU) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Packet offsets (ms from session start), sizes and downlink flags, time-ordered."""
    bin_ms = profile.bin_s * 1000.0
    t_up, s_up = _packetize(profile.uplink_bytes, bin_ms, mtu)
    t_dn, s_dn = _packetize(profile.downlink_bytes, bin_ms, mtu)
    t = np.concatenate([t_up, t_dn])
    s = np.concatenate([s_up, s_dn])
    down = np.concatenate([np.zeros(t_up.size, bool), np.ones(t_dn.size, bool)])
    order = np.argsort(t, kind="stable")
    t, s, down = t[order], s[order], down[order]
    keep = t < duration_ms
    return t[keep], s[keep], down[keep]


def synthetic_packets(flow: FlowSpec, duration_ms: float,
                      rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Packets from a synthetic flow; the first packet is sent at offset 0."""
    end = min(duration_ms, flow.duration_s * 1000.0)
    if flow.inter_arrival == "constant":
        t = np.arange(0.0, end, flow.inter_arrival_ms)
    else:
        chunks = [np.zeros(1)]
        last = 0.0
        while last < end:
            n = max(16, int((end - last) / flow.inter_arrival_ms * 1.2) + 16)
            step = last + np.cumsum(rng.exponential(flow.inter_arrival_ms, size=n))
            chunks.append(step)
            last = float(step[-1])
        t = np.concatenate(chunks)
        t = t[t < end]
    if isinstance(flow.packet_size_bytes, tuple):
        lo, hi = flow.packet_size_bytes
        sizes = rng.integers(lo, hi + 1, size=t.size)
    else:
        sizes = np.full(t.size, flow.packet_size_bytes, dtype=np.int64)
    down = rng.random(t.size) < flow.direction_ratio
    return t, sizes.astype(np.int64), down


def _plan_arrays(plan: SessionPlan, seed: int, mtu: int):
    duration_ms = plan.duration_s * 1000.0
    if isinstance(plan.source, ServiceTraceProfile):
        return trace_packets(plan.source, duration_ms, mtu)
    return synthetic_packets(plan.source, duration_ms, make_rng(seed, 4, plan.index))


def generate_packets(plan: SessionPlan, seed: int = 0, mtu: int = DEFAULT_MTU) -> Iterator[Packet]:
    """Time-ordered packet stream of one session, with absolute timestamps."""
    t, sizes, down = _plan_arrays(plan, seed, mtu)
    for ti, si, di in zip(t, sizes, down):
        yield Packet(plan.start_ms + float(ti), int(si), Direction.DOWNLINK if di else Direction.UPLINK)


class _Buckets:
    """Per-bucket packet and byte totals of a packet stream, for any start phase.

    ``limit_ms`` truncates the stream to packets sent before that offset, so
    one full-length layout serves sessions of every shorter duration.
    """

    def __init__(self, t: np.ndarray, sizes: np.ndarray, down: np.ndarray, grid_ms: int):
        self.t = t
        self.grid = grid_ms
        self.cums = (np.concatenate(([0], np.arange(1, t.size + 1, dtype=np.int64))),
                     np.concatenate(([0], np.cumsum(np.where(down, 0, sizes)))),
                     np.concatenate(([0], np.cumsum(np.where(down, sizes, 0)))))
        self._cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _stop(self, limit_ms: float | None) -> int:
        if limit_ms is None:
            return int(self.t.size)
        return int(np.searchsorted(self.t, limit_ms, side="left"))

    def totals(self, limit_ms: float | None = None) -> tuple[int, int, int]:
        stop = self._stop(limit_ms)
        return tuple(int(c[stop]) for c in self.cums)

    def relative(self, phase_ms: int, limit_ms: float | None = None):
        """Totals per bucket for a session starting ``phase_ms`` into a bucket."""
        stop = self._stop(limit_ms)
        full = stop == self.t.size
        if full and phase_ms in self._cache:
            return self._cache[phase_ms]
        if stop == 0:
            out = (np.zeros(0, np.int64),) * 3
        else:
            t = self.t[:stop]
            k = int(math.floor((phase_ms + t[-1]) / self.grid)) + 1
            edges = np.arange(1, k + 1) * self.grid - phase_ms
            idx = np.concatenate(([0], np.searchsorted(t, edges, side="left")))
            out = tuple(np.diff(c[idx]) for c in self.cums)
        if full:
            self._cache[phase_ms] = out
        return out


@dataclass
class UserPlaneStats:
    services: list[str] = field(default_factory=list)
    # per-second rows, shape (seconds,) per service
    pkts: dict[str, np.ndarray] = field(default_factory=dict)
    bytes_ul: dict[str, np.ndarray] = field(default_factory=dict)
    bytes_dl: dict[str, np.ndarray] = field(default_factory=dict)
    active_sessions: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    errors: dict[str, int] = field(default_factory=dict)
    sessions: int = 0

    @property
    def seconds(self) -> int:
        return int(self.active_sessions.size)

    @property
    def peak_active_sessions(self) -> int:
        return int(self.active_sessions.max()) if self.active_sessions.size else 0

    def total_bytes(self, service: str | None = None) -> int:
        names = [service] if service else self.services
        return int(sum(self.bytes_ul[s].sum() + self.bytes_dl[s].sum() for s in names))

    def total_packets(self, service: str | None = None) -> int:
        names = [service] if service else self.services
        return int(sum(self.pkts[s].sum() for s in names))

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_s", "active_sessions", "service", "pkts", "bytes_ul", "bytes_dl"])
        for t in range(self.seconds):
            for s in self.services:
                w.writerow([t, int(self.active_sessions[t]), s, int(self.pkts[s][t]),
                            int(self.bytes_ul[s][t]), int(self.bytes_dl[s][t])])
        if path is not None:
            Path(path).write_text(buf.getvalue())
        return buf.getvalue()

    @classmethod
    def read_csv(cls, path: str | Path) -> UserPlaneStats:
        rows: dict[str, list[tuple[int, int, int, int]]] = {}
        active: dict[int, int] = {}
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                t = int(r["t_s"])
                active[t] = int(r["active_sessions"])
                rows.setdefault(r["service"], []).append(
                    (t, int(r["pkts"]), int(r["bytes_ul"]), int(r["bytes_dl"])))
        n = max(active) + 1 if active else 0
        stats = cls(services=list(rows))
        stats.active_sessions = np.array([active.get(t, 0) for t in range(n)], dtype=np.int64)
        for s, vals in rows.items():
            for name in ("pkts", "bytes_ul", "bytes_dl"):
                getattr(stats, name)[s] = np.zeros(n, np.int64)
            for t, p, u, d in vals:
                stats.pkts[s][t], stats.bytes_ul[s][t], stats.bytes_dl[s][t] = p, u, d
        return stats


class UserPlaneDriver:
    """Delivers planned sessions' packets to the UPF one time window at a time.

    Packet totals are precomputed on a grid of ``gcd(step_ms, 1000)`` ms so
    that both UPF delivery windows and per-second statistics are exact.
    """

    def __init__(self, target, plans: Sequence[SessionPlan], *, seed: int = 0,
                 step_ms: int = 1000, mtu: int = DEFAULT_MTU, horizon_ms: int | None = None):
        self.target = target
        self.plans = list(plans)
        self.grid = math.gcd(int(step_ms), 1000)
        end = max((p.end_ms for p in self.plans), default=0)
        self.horizon_ms = int(horizon_ms if horizon_ms is not None else end)
        n = -(-self.horizon_ms // self.grid) + 1
        self.services = sorted({p.service for p in self.plans})
        self._pkts = {s: np.zeros(n, np.int64) for s in self.services}
        self._ul = {s: np.zeros(n, np.int64) for s in self.services}
        self._dl = {s: np.zeros(n, np.int64) for s in self.services}
        self.errors: dict[str, int] = {}
        self._credits: list[tuple[int, str, int, int]] = []
        self._credit_pos = 0
        self._next_ms = 0
        self._build(seed, mtu)

    def _build(self, seed: int, mtu: int) -> None:
        # trace sessions of one profile share its full-length packet layout
        cache: dict[int, _Buckets] = {}
        n = next(iter(self._pkts.values())).size if self._pkts else 0
        for plan in self.plans:
            limit = None
            if isinstance(plan.source, ServiceTraceProfile):
                buckets = cache.get(id(plan.source))
                if buckets is None:
                    profile = plan.source
                    buckets = cache[id(profile)] = _Buckets(
                        *trace_packets(profile, profile.duration_s * 1000.0, mtu), self.grid)
                limit = plan.duration_s * 1000.0
            else:
                buckets = _Buckets(*_plan_arrays(plan, seed, mtu), self.grid)
            pkts_total, ul_total, dl_total = buckets.totals(limit)
            if not self.target.has_session(plan.session_key):
                self.errors["NoSuchSession"] = self.errors.get("NoSuchSession", 0) + pkts_total
                continue
            q, r = divmod(plan.start_ms, self.grid)
            pk, ul, dl = buckets.relative(r, limit)
            stop = min(n, q + pk.size)
            if stop > q:
                self._pkts[plan.service][q:stop] += pk[: stop - q]
                self._ul[plan.service][q:stop] += ul[: stop - q]
                self._dl[plan.service][q:stop] += dl[: stop - q]
            self._credits.append((plan.end_ms, plan.session_key, pkts_total, ul_total + dl_total))
        self._credits.sort()

    def deliver_until(self, t_ms: int) -> None:
        """Charge the UPF for every packet timestamped before ``t_ms``."""
        lo, hi = self._next_ms // self.grid, min(t_ms, self.horizon_ms + self.grid) // self.grid
        if hi > lo:
            pk = sum(int(a[lo:hi].sum()) for a in self._pkts.values())
            ul = sum(int(a[lo:hi].sum()) for a in self._ul.values())
            dl = sum(int(a[lo:hi].sum()) for a in self._dl.values())
            self.target.upf_ingest_bulk(pk, ul, dl)
        self._next_ms = max(self._next_ms, hi * self.grid)
        while self._credit_pos < len(self._credits) and self._credits[self._credit_pos][0] <= t_ms:
            _, key, pk, nbytes = self._credits[self._credit_pos]
            self.target.credit_session(key, pk, nbytes)
            self._credit_pos += 1

    def stats(self, seconds: int | None = None) -> UserPlaneStats:
        per_s = 1000 // self.grid
        n_s = seconds if seconds is not None else -(-self.horizon_ms // 1000)

        def per_second(a: np.ndarray) -> np.ndarray:
            padded = np.zeros(n_s * per_s, np.int64)
            m = min(a.size, padded.size)
            padded[:m] = a[:m]
            return padded.reshape(n_s, per_s).sum(axis=1)

        starts = np.sort(np.array([p.start_ms for p in self.plans], dtype=np.int64))
        ends = np.sort(np.array([p.end_ms for p in self.plans], dtype=np.int64))
        probe = np.arange(n_s, dtype=np.int64) * 1000
        active = np.searchsorted(starts, probe, side="right") - np.searchsorted(ends, probe, side="right")
        return UserPlaneStats(
            services=list(self.services),
            pkts={s: per_second(a) for s, a in self._pkts.items()},
            bytes_ul={s: per_second(a) for s, a in self._ul.items()},
            bytes_dl={s: per_second(a) for s, a in self._dl.items()},
            active_sessions=active.astype(np.int64),
            errors=dict(self.errors),
            sessions=len(self.plans),
        )


def drive_userplane(target, plans: Sequence[SessionPlan], clock, *, seed: int = 0,
                    step_ms: int = 1000, mtu: int = DEFAULT_MTU) -> UserPlaneStats:
    """Replay ``plans`` through the UPF of ``target`` until the last session ends."""
    if not plans:
        return UserPlaneStats()
    driver = UserPlaneDriver(target, plans, seed=seed, step_ms=step_ms, mtu=mtu)
    t = 0
    while t < driver.horizon_ms:
        t += step_ms
        clock.sleep_until(t)
        driver.deliver_until(t)
    return driver.stats()

"""Turn operator-style open datasets into load classes, arrival series and service mixes.

Three input shapes are understood:

* cell activity records (``cell_id,timestamp_s,activity``), binned per cell
  at a fixed interval (600 s for Milan-style grids);
* per-service traffic volumes, normalised into a :class:`ServiceMix`;
* per-service trace profiles (``bin_index,uplink_bytes,downlink_bytes``).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from corebench.arrivals import EventSchedule, make_rng

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL_S = 600
CELL_HEADER = ["cell_id", "timestamp_s", "activity"]
PROFILE_HEADER = ["bin_index", "uplink_bytes", "downlink_bytes"]


class DatasetError(ValueError):
    pass


class SchemaError(DatasetError):
    pass


class NegativeActivity(DatasetError):
    """Raised after aggregation when some records were rejected.

    The series built from the accepted records is available as ``series``.
    """

    def __init__(self, count: int, series: dict):
        super().__init__(f"{count} record(s) with negative activity rejected")
        self.count = count
        self.series = series


class NegativeBytes(DatasetError):
    pass


class MisalignedSeries(DatasetError):
    pass


class AllZeroVolumes(DatasetError):
    pass


class WindowDoesNotDivideInterval(DatasetError):
    pass


class LoadClass(str, Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


@dataclass(frozen=True)
class CellActivityRecord:
    cell_id: str
    timestamp_s: int
    activity: float


@dataclass(frozen=True, eq=False)
class CellLoadSeries:
    cell_ids: frozenset[str]
    interval_s: int
    start_s: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "cell_ids", frozenset(self.cell_ids))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CellLoadSeries):
            return NotImplemented
        return (self.cell_ids == other.cell_ids and self.interval_s == other.interval_s
                and self.start_s == other.start_s and np.array_equal(self.values, other.values))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def span_s(self) -> int:
        return len(self) * self.interval_s


def read_cell_records(path: str | Path) -> Iterator[CellActivityRecord]:
    """Stream records from a cell CSV; an optional ``# interval_s=N`` line may lead."""
    with open(path, newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header != CELL_HEADER:
            raise SchemaError(f"{path}: expected header {','.join(CELL_HEADER)}, got {header}")
        for lineno, row in enumerate(rows, start=2):
            if len(row) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 3 columns")
            try:
                yield CellActivityRecord(row[0], int(row[1]), float(row[2]))
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None


def _interval_hint(path: str | Path) -> int:
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("#"):
        for token in first[1:].split():
            key, _, value = token.partition("=")
            if key == "interval_s":
                return int(value)
    return DEFAULT_INTERVAL_S


def aggregate_cell_series(records: Iterable[CellActivityRecord], interval_s: int = DEFAULT_INTERVAL_S,
                          *, skip_negative: bool = False) -> dict[str, CellLoadSeries]:
    """Bin records into one gap-free series per cell over a common span.

    Duplicate (cell, bin) records are summed and missing bins are zero. Records
    with negative activity are always rejected; unless ``skip_negative`` is set
    a :class:`NegativeActivity` carrying the accepted result is raised.
    """
    sums: dict[str, dict[int, float]] = defaultdict(lambda: defaultdict(float))
    rejected = 0
    lo = hi = None
    for rec in records:
        if rec.activity < 0:
            rejected += 1
            continue
        b = rec.timestamp_s // interval_s
        sums[rec.cell_id][b] += rec.activity
        lo = b if lo is None else min(lo, b)
        hi = b if hi is None else max(hi, b)

    out: dict[str, CellLoadSeries] = {}
    for cell, bins in sums.items():
        values = np.zeros(hi - lo + 1)
        for b, v in bins.items():
            values[b - lo] = v
        out[cell] = CellLoadSeries(frozenset([cell]), interval_s, lo * interval_s, values)

    if rejected:
        if not skip_negative:
            raise NegativeActivity(rejected, out)
        logger.warning("rejected %d record(s) with negative activity", rejected)
    return out


def load_cell_series(path: str | Path) -> dict[str, CellLoadSeries]:
    return aggregate_cell_series(read_cell_records(path), _interval_hint(path))


def write_cell_series(series: Mapping[str, CellLoadSeries], path: str | Path) -> None:
    """Write series back in the cell-records shape, one row per (cell, bin)."""
    intervals = {s.interval_s for s in series.values()}
    if len(intervals) > 1:
        raise MisalignedSeries("cannot write series with mixed intervals to one file")
    with open(path, "w", newline="") as fh:
        if intervals:
            fh.write(f"# interval_s={intervals.pop()}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_HEADER)
        for name in sorted(series):
            s = series[name]
            for i, v in enumerate(s.values):
                w.writerow([name, s.start_s + i * s.interval_s, repr(float(v))])


def classify_cells(series: Mapping[str, CellLoadSeries]) -> dict[str, LoadClass]:
    """Top 20% of cells by total volume are High, bottom 20% Low, the rest Medium.

    Tail sizes are ``floor(0.2 * N)``; ties in volume rank by ascending cell id.
    """
    if not series:
        raise ValueError("need at least one cell")
    ranked = sorted(series, key=lambda c: (-series[c].total, c))
    n = len(ranked)
    tail = (n * 2) // 10
    out = {}
    for rank, cell in enumerate(ranked):
        if rank < tail:
            out[cell] = LoadClass.HIGH
        elif rank >= n - tail:
            out[cell] = LoadClass.LOW
        else:
            out[cell] = LoadClass.MEDIUM
    return out


def aggregate_neighbors(series: Mapping[str, CellLoadSeries], cell_ids: Iterable[str]) -> CellLoadSeries:
    """Element-wise sum of several cells, e.g. a base station serving adjacent cells."""
    cells = list(cell_ids)
    if not cells:
        raise MisalignedSeries("no cells to aggregate")
    try:
        parts = [series[c] for c in cells]
    except KeyError as exc:
        raise MisalignedSeries(f"unknown cell {exc.args[0]!r}") from None
    first = parts[0]
    for p in parts[1:]:
        if (p.interval_s, p.start_s, len(p)) != (first.interval_s, first.start_s, len(first)):
            raise MisalignedSeries("series differ in interval or span")
    values = np.sum([p.values for p in parts], axis=0)
    ids = frozenset().union(*(p.cell_ids for p in parts))
    return CellLoadSeries(ids, first.interval_s, first.start_s, values)


@dataclass(frozen=True)
class ServiceMix:
    """Probability that a new session belongs to each service; names kept sorted."""

    entries: dict[str, float]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty service mix")
        if any(p < 0 or not math.isfinite(p) for p in self.entries.values()):
            raise ValueError("mix probabilities must be finite and >= 0")
        total = math.fsum(self.entries.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mix probabilities sum to {total}, not 1")
        object.__setattr__(self, "entries", dict(sorted(self.entries.items())))

    @property
    def services(self) -> list[str]:
        return list(self.entries)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array(list(self.entries.values()))

    def nonzero(self) -> list[str]:
        return [s for s, p in self.entries.items() if p > 0]


def derive_service_mix(volumes: Mapping[str, float]) -> ServiceMix:
    if any(v < 0 for v in volumes.values()):
        raise ValueError("service volumes must be >= 0")
    total = math.fsum(volumes.values())
    if total <= 0:
        raise AllZeroVolumes("every service volume is zero")
    probs = {s: v / total for s, v in volumes.items()}
    # push the rounding residue onto the largest entry so the sum is 1 to 1e-9
    residue = 1.0 - math.fsum(probs.values())
    if residue:
        top = max(probs, key=lambda s: (probs[s], s))
        probs[top] += residue
    return ServiceMix(probs)


def load_service_mix(path: str | Path) -> ServiceMix:
    """JSON map of service to probability or raw volume; always normalised."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or not all(isinstance(v, (int, float)) for v in data.values()):
        raise SchemaError(f"{path}: expected a JSON object of service -> number")
    return derive_service_mix({str(k): float(v) for k, v in data.items()})


def read_service_volumes(path: str | Path) -> dict[str, float]:
    """Sum a ``service,volume`` CSV (NetMob-style per-interval rows allowed)."""
    totals: dict[str, float] = defaultdict(float)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"service", "volume"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: expected columns service,volume")
        for row in reader:
            totals[row["service"]] += float(row["volume"])
    return dict(totals)


def _apportion(total: int, parts: int) -> np.ndarray:
    # largest remainder over equal quotas: every remainder ties, index order wins
    counts = np.full(parts, total // parts, dtype=np.int64)
    counts[: total % parts] += 1
    return counts


def series_to_schedule(series: CellLoadSeries, window_s: int, scale: float, seed: int) -> EventSchedule:
    """Convert a load series into request arrivals.

    Each bin's ``value * scale`` is rounded half-up to an event count, split
    over the bin's windows by largest-remainder apportionment, and each
    window's events are placed uniformly at random inside it.
    """
    if window_s <= 0 or series.interval_s % window_s:
        raise WindowDoesNotDivideInterval(f"window {window_s}s does not divide interval {series.interval_s}s")
    per_bin = series.interval_s // window_s
    window_ms = window_s * 1000
    duration_ms = series.span_s * 1000
    counts = np.floor(series.values * scale + 0.5).astype(np.int64)
    if scale == 0 or not counts.any():
        return EventSchedule.empty(duration_ms)

    window_counts = np.concatenate([_apportion(int(n), per_bin) for n in counts])
    window_index = np.repeat(np.arange(window_counts.size, dtype=np.int64), window_counts)
    rng = make_rng(seed, 2)
    offsets = np.floor(rng.uniform(0.0, window_ms, size=window_index.size)).astype(np.int64)
    np.clip(offsets, 0, window_ms - 1, out=offsets)
    return EventSchedule(np.sort(window_index * window_ms + offsets), duration_ms)


@dataclass(frozen=True, eq=False)
class ServiceTraceProfile:
    service: str
    bin_s: int
    uplink_bytes: np.ndarray
    downlink_bytes: np.ndarray

    def __post_init__(self):
        up = np.asarray(self.uplink_bytes, dtype=np.int64)
        down = np.asarray(self.downlink_bytes, dtype=np.int64)
        if up.shape != down.shape or up.ndim != 1:
            raise SchemaError("uplink and downlink series must have the same length")
        if (up < 0).any() or (down < 0).any():
            raise NegativeBytes(f"{self.service}: negative byte count")
        object.__setattr__(self, "uplink_bytes", up)
        object.__setattr__(self, "downlink_bytes", down)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ServiceTraceProfile):
            return NotImplemented
        return (self.service == other.service and self.bin_s == other.bin_s
                and np.array_equal(self.uplink_bytes, other.uplink_bytes)
                and np.array_equal(self.downlink_bytes, other.downlink_bytes))

    def __len__(self) -> int:
        return int(self.uplink_bytes.size)

    @property
    def duration_s(self) -> int:
        return len(self) * self.bin_s

    @property
    def total_bytes(self) -> int:
        return int(self.uplink_bytes.sum() + self.downlink_bytes.sum())


def load_trace_profile(path: str | Path) -> ServiceTraceProfile:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise SchemaError(f"{path}: missing '# service=<name> bin_s=<n>' line")
    meta = dict(tok.partition("=")[::2] for tok in lines[0][1:].split())
    if "service" not in meta or "bin_s" not in meta:
        raise SchemaError(f"{path}: comment line must carry service= and bin_s=")
    try:
        bin_s = int(meta["bin_s"])
    except ValueError:
        raise SchemaError(f"{path}: bin_s is not an integer") from None
    if bin_s <= 0:
        raise SchemaError(f"{path}: bin_s must be > 0")
    rows = list(csv.reader(lines[1:]))
    if not rows or rows[0] != PROFILE_HEADER:
        raise SchemaError(f"{path}: expected header {','.join(PROFILE_HEADER)}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise SchemaError(f"{path}: profile has no bins")
    up, down = [], []
    for expected, row in enumerate(body):
        if len(row) != 3:
            raise SchemaError(f"{path}: row {expected} needs 3 columns")
        try:
            idx, u, d = (int(x) for x in row)
        except ValueError:
            raise SchemaError(f"{path}: row {expected} is not integral") from None
        if idx != expected:
            raise SchemaError(f"{path}: bin_index {idx} out of sequence (expected {expected})")
        up.append(u)
        down.append(d)
    return ServiceTraceProfile(meta["service"], bin_s, np.array(up), np.array(down))


def write_trace_profile(profile: ServiceTraceProfile, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# service={profile.service} bin_s={profile.bin_s}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_HEADER)
        for i, (u, d) in enumerate(zip(profile.uplink_bytes, profile.downlink_bytes)):
            w.writerow([i, int(u), int(d)])

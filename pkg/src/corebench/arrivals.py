"""Deterministic arrival schedules shared by both injectors.

All randomness comes from numpy's PCG64 bit generator seeded through a
``SeedSequence`` built from ``(seed, *stream_tags)``, so a given scenario
seed yields the same schedule on every platform.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from corebench.scenario import ArrivalProcess, Burst, Random, Sequential, TraceDriven


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for one named stream derived from a scenario seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True, eq=False)
class EventSchedule:
    """Timestamped arrival events, as millisecond offsets from injection start.

    ``source`` is set by :func:`merge_schedules` and records which input
    schedule each event came from.
    """

    t_ms: np.ndarray
    duration_ms: int
    source: np.ndarray | None = None

    def __post_init__(self):
        t = np.ascontiguousarray(self.t_ms, dtype=np.int64)
        object.__setattr__(self, "t_ms", t)
        if t.ndim != 1:
            raise ValueError("t_ms must be one-dimensional")
        if t.size and (np.any(np.diff(t) < 0) or t[0] < 0 or t[-1] > self.duration_ms):
            raise ValueError("event times must be nondecreasing and within [0, duration]")
        if self.source is not None:
            object.__setattr__(self, "source", np.asarray(self.source, dtype=np.int64))

    @classmethod
    def empty(cls, duration_ms: int) -> EventSchedule:
        return cls(np.zeros(0, dtype=np.int64), duration_ms)

    def __len__(self) -> int:
        return int(self.t_ms.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventSchedule):
            return NotImplemented
        return self.duration_ms == other.duration_ms and np.array_equal(self.t_ms, other.t_ms)

    @property
    def events(self) -> list[tuple[int, int]]:
        return [(int(t), i) for i, t in enumerate(self.t_ms)]

    def shifted(self, offset_ms: int) -> np.ndarray:
        return self.t_ms + int(offset_ms)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write("index,t_ms\n")
        for i, t in enumerate(self.t_ms):
            buf.write(f"{i},{int(t)}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def build_schedule(spec, duration_s: int, seed: int, *, stream: int = 0,
                   base_dir: str | Path | None = None) -> EventSchedule:
    """Expand an arrival spec into a concrete schedule over ``duration_s``.

    ``stream`` separates the random streams of several loads sharing one seed.
    Trace-driven specs resolve their series reference against ``base_dir``.
    """
    duration_ms = int(duration_s) * 1000
    rng = make_rng(seed, 1, stream)

    if isinstance(spec, Sequential):
        if spec.gap_ms <= 0:
            raise ValueError("gap_ms must be > 0")
        return EventSchedule(np.arange(0, duration_ms, spec.gap_ms, dtype=np.int64), duration_ms)

    if isinstance(spec, Random):
        if spec.process is ArrivalProcess.POISSON:
            return EventSchedule(_poisson_times(rng, spec.rate_per_s, duration_ms), duration_ms)
        n = int(math.floor(spec.rate_per_s * duration_s + 0.5))
        t = np.sort(np.floor(rng.uniform(0.0, duration_ms, size=n))).astype(np.int64)
        return EventSchedule(t, duration_ms)

    if isinstance(spec, Burst):
        lo = spec.offset_s * 1000
        hi = (spec.offset_s + spec.window_s) * 1000
        t = np.sort(np.floor(rng.uniform(lo, hi, size=spec.count))).astype(np.int64)
        # float rounding must never push an event onto the window's open end
        np.clip(t, lo, hi - 1, out=t)
        return EventSchedule(t, duration_ms)

    if isinstance(spec, TraceDriven):
        from corebench.datasets import aggregate_neighbors, load_cell_series, series_to_schedule
        from corebench.resources import resolve_ref

        series = load_cell_series(resolve_ref(spec.series_ref, base_dir))
        cells = list(spec.cells) if spec.cells else sorted(series)
        combined = aggregate_neighbors(series, cells)
        full = series_to_schedule(combined, spec.window_s, spec.scale, seed=int(rng.integers(2**63)))
        keep = full.t_ms[full.t_ms < duration_ms]
        return EventSchedule(keep, duration_ms)

    raise TypeError(f"unsupported arrival spec {spec!r}")


def _poisson_times(rng: np.random.Generator, rate_per_s: float, duration_ms: int) -> np.ndarray:
    mean_ms = 1000.0 / rate_per_s
    expected = duration_ms / mean_ms
    chunk = max(16, int(expected + 6 * math.sqrt(expected) + 16))
    times: list[np.ndarray] = []
    last = 0.0
    while True:
        cum = last + np.cumsum(rng.exponential(mean_ms, size=chunk))
        inside = cum[cum < duration_ms]
        times.append(inside)
        if inside.size < chunk:
            break
        last = float(cum[-1])
    return np.floor(np.concatenate(times)).astype(np.int64)


def merge_schedules(schedules: Sequence[EventSchedule]) -> EventSchedule:
    """Time-sorted union; ties keep input-schedule order, indices are re-dense."""
    if not schedules:
        raise ValueError("nothing to merge")
    durations = {s.duration_ms for s in schedules}
    if len(durations) != 1:
        raise ValueError(f"schedules disagree on duration: {sorted(durations)}")
    t = np.concatenate([s.t_ms for s in schedules])
    src = np.concatenate([np.full(len(s), k, dtype=np.int64) for k, s in enumerate(schedules)])
    order = np.lexsort((src, t))
    return EventSchedule(t[order], durations.pop(), source=src[order])


def count_in_window(schedule: EventSchedule, lo_ms: int, hi_ms: int) -> int:
    t = schedule.t_ms
    return int(np.count_nonzero((t >= lo_ms) & (t < hi_ms)))


def schedule_from_times(times: Iterable[int], duration_ms: int) -> EventSchedule:
    return EventSchedule(np.sort(np.fromiter(times, dtype=np.int64)), duration_ms)

"""Summary tables and plot-ready data from finished experiments.

Every function here works from an :class:`ExperimentResult`, and results
loaded back from an export directory carry exactly what the CSV files hold,
so any summary can be recomputed from the files alone.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from corebench.kinds import VnfKind
from corebench.orchestrator import ExperimentResult, load_result
from corebench.resources import data_root

BYTES_PER_MB = 1_000_000
FIG5_VNFS = (VnfKind.AMF, VnfKind.SMF, VnfKind.AUSF, VnfKind.UDM, VnfKind.NRF)
TABLE1_SESSIONS = (100, 200, 300, 400, 500)


class EmptyPhase(ValueError):
    pass


class GroupBy(str, Enum):
    SERVICE = "Service"
    PROCEDURE = "Procedure"


class PlotKind(str, Enum):
    CPU_MEM_OVER_TIME = "CpuMemOverTime"
    CPU_VS_SESSIONS = "CpuVsSessions"
    UTILIZATION_DIURNAL = "UtilizationDiurnal"


@dataclass(frozen=True)
class SummaryRow:
    group: str
    level: int
    cpu_millicores: float
    mem_bytes: float
    samples: int


@dataclass(frozen=True)
class SummaryTable:
    vnf: VnfKind
    rows: tuple[SummaryRow, ...]

    @property
    def groups(self) -> list[str]:
        return list(dict.fromkeys(r.group for r in self.rows))

    @property
    def levels(self) -> list[int]:
        return sorted({r.level for r in self.rows})

    def cell(self, group: str, level: int) -> SummaryRow:
        for r in self.rows:
            if r.group == group and r.level == level:
                return r
        raise KeyError((group, level))

    def pivot(self, metric: str = "cpu_millicores") -> dict[str, dict[int, float]]:
        out: dict[str, dict[int, float]] = {}
        for r in self.rows:
            out.setdefault(r.group, {})[r.level] = getattr(r, metric)
        return out

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "level", "vnf", "cpu_millicores", "mem_bytes", "samples"])
        for r in self.rows:
            w.writerow([r.group, r.level, self.vnf.value, repr(r.cpu_millicores), repr(r.mem_bytes), r.samples])
        if path is not None:
            Path(path).write_text(buf.getvalue())
        return buf.getvalue()


def group_label(result: ExperimentResult, group_by: GroupBy | str) -> str:
    """Service name of a single-service run ("Mixed" otherwise), or the procedures fired."""
    if GroupBy(group_by) is GroupBy.SERVICE:
        services = [s for s in result.up_stats.services if result.up_stats.total_packets(s) > 0]
        if not services:
            services = list(result.up_stats.services)
        if not services:
            return "none"
        return services[0] if len(services) == 1 else "Mixed"
    procs = sorted({o.procedure.value for o in result.outcomes})
    return "+".join(procs) if procs else "none"


def default_level(result: ExperimentResult, group_by: GroupBy | str) -> int:
    if GroupBy(group_by) is GroupBy.SERVICE:
        return int(result.up_stats.sessions)
    return len(result.outcomes)


def inject_means(result: ExperimentResult, vnf: VnfKind = VnfKind.UPF) -> tuple[float, float, int]:
    """Mean CPU (millicores) and memory (bytes) of ``vnf`` over inject-phase samples.

    Raises:
        EmptyPhase: the result holds no inject-phase sample for ``vnf``.
    """
    samples = result.dataset.for_vnf(VnfKind(vnf), phase="inject")
    if not samples:
        raise EmptyPhase(f"no inject-phase samples for {VnfKind(vnf).value}")
    cpu = float(np.mean([s.cpu_millicores for s in samples]))
    mem = float(np.mean([s.mem_bytes for s in samples]))
    return cpu, mem, len(samples)


def summarize(results: ExperimentResult | Sequence[ExperimentResult], group_by: GroupBy | str = GroupBy.SERVICE,
              levels: Sequence[int] | None = None, vnf: VnfKind = VnfKind.UPF) -> SummaryTable:
    """One row per (group, level) holding inject-phase means.

    ``levels`` labels each result's load level; by default a result's level
    is its session count (Service) or its request count (Procedure).
    """
    if isinstance(results, ExperimentResult):
        results = [results]
    if levels is not None and len(levels) != len(results):
        raise ValueError("need exactly one level per result")
    rows = []
    for i, r in enumerate(results):
        if not r.exit.completed:
            raise ValueError(f"cannot summarize an aborted run ({r.exit})")
        cpu, mem, n = inject_means(r, vnf)
        level = int(levels[i]) if levels is not None else default_level(r, group_by)
        rows.append(SummaryRow(group_label(r, group_by), level, cpu, mem, n))
    return SummaryTable(VnfKind(vnf), tuple(rows))


def summarize_exports(dirs: Iterable[str | Path], group_by: GroupBy | str = GroupBy.SERVICE,
                      levels: Sequence[int] | None = None, vnf: VnfKind = VnfKind.UPF) -> SummaryTable:
    return summarize([load_result(d) for d in dirs], group_by, levels, vnf)


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())
    return path


def emit_plot_data(results: ExperimentResult | Sequence[ExperimentResult], kind: PlotKind | str,
                   out_dir: str | Path, vnfs: Sequence[VnfKind] | None = None) -> list[Path]:
    """Write tidy, figure-ready CSV files; nothing is rendered.

    CpuMemOverTime: ``cpu_mem_<vnf>.csv`` with ``t_s,cpu_millicores,mem_mb,phase``
    per VNF; the ``phase`` column marks the injection window.
    CpuVsSessions: ``cpu_vs_sessions.csv`` with ``group,sessions,cpu_millicores,mem_mb``.
    UtilizationDiurnal: ``utilization_diurnal.csv`` with
    ``t_s,cpu_millicores,active_sessions``, one row per inject-phase UPF sample
    that closes an interval (the very first sample of a run closes none).
    """
    if isinstance(results, ExperimentResult):
        results = [results]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = PlotKind(kind)

    if kind is PlotKind.CPU_MEM_OVER_TIME:
        written = []
        ds = results[0].dataset if results else None
        for vnf in vnfs or FIG5_VNFS:
            rows = []
            if ds is not None:
                rows = [(repr(s.t_ms / 1000.0), repr(s.cpu_millicores), repr(s.mem_bytes / BYTES_PER_MB), ph)
                        for s, ph in zip(ds.samples, ds.sample_phases) if s.vnf is vnf]
            written.append(_write(out / f"cpu_mem_{vnf.value}.csv",
                                  ["t_s", "cpu_millicores", "mem_mb", "phase"], rows))
        return written

    if kind is PlotKind.CPU_VS_SESSIONS:
        rows = []
        if results:
            table = summarize(results, GroupBy.SERVICE, vnf=(vnfs or [VnfKind.UPF])[0])
            rows = [(r.group, r.level, repr(r.cpu_millicores), repr(r.mem_bytes / BYTES_PER_MB))
                    for r in sorted(table.rows, key=lambda r: (r.group, r.level))]
        return [_write(out / "cpu_vs_sessions.csv", ["group", "sessions", "cpu_millicores", "mem_mb"], rows)]

    rows = []
    if results:
        r = results[0]
        interval = r.dataset.interval_ms
        active = r.up_stats.active_sessions
        for s in r.dataset.for_vnf((vnfs or [VnfKind.UPF])[0], phase="inject"):
            if s.t_ms < interval:
                continue
            sec = int((s.t_ms - interval) // 1000)
            n = int(active[sec]) if 0 <= sec < active.size else 0
            rows.append((repr(s.t_ms / 1000.0), repr(s.cpu_millicores), n))
    return [_write(out / "utilization_diurnal.csv", ["t_s", "cpu_millicores", "active_sessions"], rows)]


@dataclass(frozen=True)
class Table1:
    """Published UPF CPU (millicores) and memory (MB) per service and session count."""

    sessions: tuple[int, ...]
    cpu: dict[str, tuple[float, ...]]
    mem_mb: dict[str, tuple[float, ...]]

    @property
    def services(self) -> list[str]:
        return list(self.cpu)


def load_table1(path: str | Path | None = None) -> Table1:
    path = Path(path) if path is not None else data_root() / "table1.csv"
    cpu: dict[str, dict[int, float]] = {}
    mem: dict[str, dict[int, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            n = int(row["sessions"])
            cpu.setdefault(row["service"], {})[n] = float(row["cpu_millicores"])
            mem.setdefault(row["service"], {})[n] = float(row["mem_mb"])
    sessions = tuple(sorted(next(iter(cpu.values()))))
    return Table1(sessions,
                  {s: tuple(v[n] for n in sessions) for s, v in cpu.items()},
                  {s: tuple(v[n] for n in sessions) for s, v in mem.items()})


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.corrcoef(np.asarray(x, float), np.asarray(y, float))[0, 1])


def ordering_at(table: Table1, sessions: int) -> list[str]:
    """Services sorted by CPU at one session count, heaviest first."""
    i = table.sessions.index(sessions)
    return sorted(table.services, key=lambda s: -table.cpu[s][i])


def linear_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares slope, intercept and coefficient of determination."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2

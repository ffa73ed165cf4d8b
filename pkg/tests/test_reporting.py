from __future__ import annotations

import csv
import statistics

import pytest

from conftest import bundled, variant

from corebench.kinds import VnfKind
from corebench.orchestrator import experiment_phases, export_result, run_experiment
from corebench.reporting import (
    FIG5_VNFS, EmptyPhase, GroupBy, PlotKind, emit_plot_data, inject_means, linear_fit, load_table1, ordering_at,
    pearson, summarize, summarize_exports,
)

SERVICES = ("Browsing", "Gaming", "Instagram", "YouTube")


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_summary_matches_a_recomputation_from_the_files(tmp_path, upf_scaling):
    dirs = []
    for n in (100, 300):
        export_result(upf_scaling[n], tmp_path / str(n), export_tap=False)
        dirs.append(tmp_path / str(n))
    table = summarize_exports(dirs)
    for n, d in zip((100, 300), dirs):
        s = upf_scaling[n].scenario
        _, inject, _ = experiment_phases(s)
        interval = s.telemetry_interval_ms
        upf = [r for r in _rows(d / "telemetry.csv") if r["vnf"] == "UPF"
               and inject.contains(max(float(r["t_ms"]) - interval, 0.0))]
        row = table.cell("YouTube", n)
        assert row.samples == len(upf)
        assert row.cpu_millicores == pytest.approx(statistics.fmean(float(r["cpu_millicores"]) for r in upf),
                                                   rel=1e-9)
        assert row.mem_bytes == pytest.approx(statistics.fmean(int(r["mem_bytes"]) for r in upf), rel=1e-9)
    assert summarize([upf_scaling[100]]) == summarize_exports(dirs[:1])


def _short(service: str, sessions: int):
    base = bundled("upf_mixed_100")
    mix = {service: 1.0} if service != "Mixed" else "bundled:mix/netmob_mix.json"
    return variant(base, name=f"{service}-{sessions}", duration_s=10, warmup_s=1, drain_s=1,
                   traffic={"sessions": sessions, "mix": mix, "session_duration_s": 8,
                            "arrival": {"kind": "Burst", "count": sessions, "window_s": 1}})


def test_service_by_level_table_has_twenty_five_rows():
    runs = [run_experiment(_short(svc, n)) for svc in SERVICES + ("Mixed",) for n in (4, 8, 12, 16, 20)]
    table = summarize(runs)
    assert len(table.rows) == 25
    assert sorted(table.groups) == sorted(SERVICES + ("Mixed",))
    assert table.levels == [4, 8, 12, 16, 20]
    pivot = table.pivot()
    for svc in SERVICES:
        # more sessions never means less UPF work for one service
        cpu = [pivot[svc][n] for n in table.levels]
        assert cpu == sorted(cpu) and cpu[0] > 0
    assert len(table.to_csv().splitlines()) == 26


def test_summary_levels_and_procedure_grouping(burst_result):
    table = summarize([burst_result], GroupBy.PROCEDURE, levels=[7], vnf=VnfKind.SMF)
    assert table.rows[0].group == "PduSessionSetup" and table.rows[0].level == 7
    assert summarize(burst_result, GroupBy.PROCEDURE, vnf=VnfKind.SMF).rows[0].level == 200
    with pytest.raises(ValueError):
        summarize([burst_result], levels=[1, 2])


def test_empty_inject_phase():
    # a 1 s inject phase sampled every 2 s leaves no sample whose interval starts inside it
    s = variant(bundled("registration_sequential"), duration_s=1, warmup_s=5, drain_s=5, telemetry_interval_ms=2000)
    result = run_experiment(s)
    with pytest.raises(EmptyPhase):
        inject_means(result, VnfKind.AMF)


def test_cpu_mem_over_time_files(tmp_path, burst_result):
    paths = emit_plot_data(burst_result, PlotKind.CPU_MEM_OVER_TIME, tmp_path)
    assert [p.name for p in paths] == [f"cpu_mem_{v.value}.csv" for v in FIG5_VNFS]
    rows = _rows(paths[0])
    assert list(rows[0]) == ["t_s", "cpu_millicores", "mem_mb", "phase"]
    assert {r["phase"] for r in rows} == {"warmup", "inject", "drain"}
    assert len(rows) == len(burst_result.dataset.for_vnf(VnfKind.AMF))
    empty = emit_plot_data([], PlotKind.CPU_MEM_OVER_TIME, tmp_path / "empty")
    assert all(p.read_text() == "t_s,cpu_millicores,mem_mb,phase\n" for p in empty)


def test_cpu_vs_sessions_file(tmp_path, upf_scaling):
    (path,) = emit_plot_data(list(upf_scaling.values()), PlotKind.CPU_VS_SESSIONS, tmp_path)
    rows = _rows(path)
    assert [int(r["sessions"]) for r in rows] == [100, 200, 300, 400, 500]
    assert {r["group"] for r in rows} == {"YouTube"}
    emit_plot_data([], "CpuVsSessions", tmp_path / "x")
    assert (tmp_path / "x" / "cpu_vs_sessions.csv").read_text() == "group,sessions,cpu_millicores,mem_mb\n"


def test_utilization_diurnal_file(tmp_path, diurnal):
    high = diurnal["high"]
    (path,) = emit_plot_data(high, PlotKind.UTILIZATION_DIURNAL, tmp_path)
    rows = _rows(path)
    # one row per second of the twelve-hour replay
    assert len(rows) == 43_200
    assert float(rows[0]["t_s"]) == 1.0 and float(rows[-1]["t_s"]) == 43_200.0
    assert max(int(r["active_sessions"]) for r in rows) == high.up_stats.peak_active_sessions


def test_table1_loader():
    table = load_table1()
    assert table.sessions == (100, 200, 300, 400, 500)
    assert sorted(table.services) == sorted(SERVICES + ("Mixed",))
    assert table.cpu["Gaming"][0] == 42 and table.mem_mb["Gaming"][0] == 4.33
    assert ordering_at(table, 100)[-1] == "Gaming"


def test_linear_fit_and_pearson():
    slope, intercept, r2 = linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert (slope, intercept, r2) == pytest.approx((2.0, 1.0, 1.0))
    assert linear_fit([1, 2, 3], [5, 5, 5])[2] == 1.0
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

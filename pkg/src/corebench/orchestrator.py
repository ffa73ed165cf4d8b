"""Experiment lifecycle: prepare, warmup, inject, drain, collect.

Against the bundled emulator everything runs on one virtual clock that the
orchestrator steps in telemetry-interval increments. Each step first lets
the NRF heartbeats fall due, then fires the control-plane events scheduled
inside the step (advancing the clock to each one), then charges the UPF for
the user-plane packets timestamped inside the step, and finally samples
telemetry at the step's end. External targets run the same lifecycle on
the wall clock.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from corebench.arrivals import EventSchedule, build_schedule, merge_schedules
from corebench.clock import VirtualClock, WallClock
from corebench.cpli import (
    DEFAULT_TIMEOUT_MS, ControlInjector, EventMark, ExternalTarget, RequestOutcome, emit_event_marks,
    outcomes_to_csv, read_outcomes,
)
from corebench.datasets import ServiceMix, derive_service_mix, load_service_mix, load_trace_profile
from corebench.emulator.core import MessageTap, TransportKind, start_emulator
from corebench.emulator.costs import ResourceCostModel, load_cost_model
from corebench.emulator.transport import TargetUnreachable
from corebench.kinds import TargetKind, VnfKind
from corebench.resources import resolve_ref
from corebench.scenario import Scenario, ValidationReport, serialize_scenario, validate_scenario
from corebench.telemetry import (
    AlignedDataset, Backend, Phase, align, export_csv, import_dataset, start_collector,
)
from corebench.upli import FlowSource, SessionPlan, UserPlaneDriver, UserPlaneStats, plan_sessions

logger = logging.getLogger(__name__)

PHASES = ("warmup", "inject", "drain")
SESSION_MARK = "UserPlane"


class OrchestratorError(Exception):
    pass


class DatasetMissing(OrchestratorError):
    pass


class ScenarioInvalid(OrchestratorError):
    def __init__(self, report: ValidationReport):
        super().__init__("; ".join(str(v) for v in report.violations))
        self.report = report


class InsufficientArrivals(OrchestratorError):
    pass


class ExitKind(str, Enum):
    COMPLETED = "Completed"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class ExitStatus:
    kind: ExitKind
    reason: str | None = None

    @property
    def completed(self) -> bool:
        return self.kind is ExitKind.COMPLETED

    def __str__(self) -> str:
        return self.kind.value if self.reason is None else f"{self.kind.value}({self.reason})"


COMPLETED = ExitStatus(ExitKind.COMPLETED)


@dataclass
class ExperimentResult:
    scenario: Scenario | None
    dataset: AlignedDataset
    outcomes: list[RequestOutcome]
    up_stats: UserPlaneStats
    exit: ExitStatus
    tap: MessageTap | None = None
    out_dir: Path | None = None
    plans: list[SessionPlan] = field(default_factory=list)


def experiment_phases(s: Scenario) -> tuple[Phase, ...]:
    w, d = s.warmup_s * 1000, s.duration_s * 1000
    return (Phase("warmup", 0, w), Phase("inject", w, w + d), Phase("drain", w + d, w + d + s.drain_s * 1000))


def _dataset(path: Path) -> Path:
    if not path.exists():
        raise DatasetMissing(f"dataset not found: {path}")
    return path


def resolve_traffic(s: Scenario, base_dir: str | Path | None = None) -> tuple[ServiceMix, dict[str, FlowSource]]:
    """Load the service mix and every flow source a traffic section refers to."""
    t = s.traffic
    if t is None:
        raise ValueError("scenario has no traffic section")
    if isinstance(t.mix, str):
        mix = load_service_mix(_dataset(resolve_ref(t.mix, base_dir)))
    else:
        mix = derive_service_mix(t.mix)
    sources: dict[str, FlowSource] = {}
    for service, src in sorted(t.profiles.items()):
        if src.trace is not None:
            sources[service] = load_trace_profile(_dataset(resolve_ref(src.trace, base_dir)))
        elif src.synthetic is not None:
            sources[service] = src.synthetic
    return mix, sources


def _schedule(spec, s: Scenario, stream: int, base_dir) -> EventSchedule:
    try:
        return build_schedule(spec, s.duration_s, s.seed, stream=stream, base_dir=base_dir)
    except FileNotFoundError as exc:
        raise DatasetMissing(str(exc)) from None


def build_plans(s: Scenario, base_dir: str | Path | None = None) -> tuple[list[SessionPlan], EventSchedule]:
    """Session plans of a scenario, clipped so that no session outlives the experiment."""
    if s.traffic is None:
        return [], EventSchedule.empty(s.duration_s * 1000)
    mix, sources = resolve_traffic(s, base_dir)
    schedule = _schedule(s.traffic.arrival, s, len(s.procedures), base_dir)
    n = len(schedule) if s.traffic.sessions is None else s.traffic.sessions
    if n > len(schedule):
        raise InsufficientArrivals(f"traffic arrival yields {len(schedule)} events for {n} sessions")
    schedule = EventSchedule(schedule.t_ms[:n], schedule.duration_ms)
    plans = plan_sessions(n, mix, sources, schedule, s.seed, start_offset_ms=s.warmup_s * 1000,
                          session_duration_s=s.traffic.session_duration_s)
    span_ms = s.total_span_s * 1000
    return [p if p.end_ms <= span_ms else replace(p, duration_s=(span_ms - p.start_ms) / 1000.0)
            for p in plans], schedule


def session_marks(plans: Sequence[SessionPlan], established: set[int]) -> list[EventMark]:
    marks = []
    for p in plans:
        status = "Success" if p.index in established else "Failure"
        marks.append(EventMark(p.start_ms, "session_start", SESSION_MARK, p.session_key, status))
        marks.append(EventMark(p.end_ms, "session_end", SESSION_MARK, p.session_key, status))
    return marks


def run_experiment(s: Scenario, *, transport: TransportKind | str = TransportKind.IN_PROCESS,
                   base_dir: str | Path | None = None, out_dir: str | Path | None = None,
                   seed: int | None = None, cost_model: ResourceCostModel | None = None,
                   pids: Mapping[VnfKind, int] | None = None, idle: bool = False,
                   export_tap: bool = True, export_schedule: bool = False,
                   timeout_ms: int = DEFAULT_TIMEOUT_MS) -> ExperimentResult:
    """Run one scenario end to end and, when ``out_dir`` is given, export it.

    ``idle`` runs the same timeline with both injectors muted, which gives
    the telemetry baseline of an otherwise identical experiment.

    Raises:
        ScenarioInvalid: the scenario fails validation.
        DatasetMissing: a referenced dataset file does not exist.
        TargetUnreachable: an external target cannot be reached at all.
    """
    if seed is not None:
        s = s.model_copy(update={"seed": int(seed)})
    report = validate_scenario(s)
    if not report.ok:
        raise ScenarioInvalid(report)
    if s.target.kind is TargetKind.EXTERNAL:
        result = _run_external(s, base_dir, pids or {}, idle, timeout_ms)
    else:
        if cost_model is None:
            cfg = s.target.emulator_config
            cost_model = load_cost_model(_dataset(resolve_ref(cfg, base_dir)) if cfg else None)
        result = _run_emulated(s, TransportKind(transport), base_dir, cost_model, idle, timeout_ms)
    if out_dir is not None:
        export_result(result, out_dir, export_tap=export_tap,
                      schedules=_all_schedules(s, base_dir) if export_schedule else None)
    return result


def _cp_timeline(s: Scenario, base_dir) -> tuple[np.ndarray, np.ndarray]:
    schedules = [_schedule(load.arrival, s, i, base_dir) for i, load in enumerate(s.procedures)]
    if not schedules:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    merged = merge_schedules(schedules)
    return merged.t_ms + s.warmup_s * 1000, merged.source


def _all_schedules(s: Scenario, base_dir) -> dict[str, EventSchedule]:
    out = {f"schedule_cp{i}.csv": _schedule(load.arrival, s, i, base_dir) for i, load in enumerate(s.procedures)}
    if s.traffic is not None:
        out["schedule_up.csv"] = build_plans(s, base_dir)[1]
    return out


def _injectors(s: Scenario, target, timeout_ms: int) -> list[ControlInjector]:
    single = len(s.procedures) == 1
    return [ControlInjector(target, load, request_prefix="cp" if single else f"cp{i}_", timeout_ms=timeout_ms)
            for i, load in enumerate(s.procedures)]


def _metadata(s: Scenario, transport: str, exit: ExitStatus) -> dict:
    return {"scenario": s.name, "scenario_hash": s.digest(), "seed": s.seed, "target": s.target.kind.value,
            "transport": transport, "exit": exit.kind.value, "exit_reason": exit.reason}


def _run_emulated(s: Scenario, transport: TransportKind, base_dir, cost_model: ResourceCostModel,
                  idle: bool, timeout_ms: int) -> ExperimentResult:
    interval = s.telemetry_interval_ms
    span_ms = s.total_span_s * 1000
    phases = experiment_phases(s)
    clock = VirtualClock(0)

    logger.info("prepare: resolving datasets for %s", s.name)
    plans, _ = build_plans(s, base_dir)
    ev_t, ev_src = _cp_timeline(s, base_dir)
    if idle:
        plans, ev_t, ev_src = [], ev_t[:0], ev_src[:0]

    emu = start_emulator(cost_model, transport, clock=clock)
    outcomes: list[RequestOutcome] = []
    exit = COMPLETED
    try:
        established: set[int] = set()
        for p in plans:
            resp = emu.submit(VnfKind.AMF, "PDU_SESSION_REQUEST", f"up{p.index}", p.supi,
                              {"pdu_session_id": 1, "session_key": p.session_key})
            if resp.ok:
                established.add(p.index)
            else:
                logger.warning("session %s not established: %s", p.session_key, resp.reason)
        logger.info("prepare: %d/%d user-plane sessions established", len(established), len(plans))

        driver = UserPlaneDriver(emu, plans, seed=s.seed, step_ms=interval, horizon_ms=span_ms)
        injectors = _injectors(s, emu, timeout_ms)
        fired = [0] * len(injectors)
        collector = start_collector(Backend.EMULATOR_COUNTERS, list(VnfKind), interval, emulator=emu)

        bounds = list(range(0, span_ms, interval)) + [span_ms]
        k, phase_i = 0, -1
        for t0, t1 in zip(bounds, bounds[1:]):
            while phase_i + 1 < len(phases) and t0 >= phases[phase_i + 1].start_ms:
                phase_i += 1
                logger.info("phase %s begins at %d ms", phases[phase_i].name, t0)
            emu.heartbeat_tick()
            try:
                while k < ev_t.size and ev_t[k] < t1:
                    clock.advance_to(int(ev_t[k]))
                    src = int(ev_src[k])
                    outcomes.append(injectors[src].fire(fired[src], clock))
                    fired[src] += 1
                    k += 1
            except TargetUnreachable as exc:
                exit = ExitStatus(ExitKind.ABORTED, str(exc))
                logger.error("aborting at %d ms: %s", clock.now_ms(), exc)
                break
            driver.deliver_until(t1)
            clock.advance_to(t1)
            collector.tick()
        logger.info("collect: %d samples", len(collector.samples))
        samples = collector.stop()
        up_stats = driver.stats(seconds=math.ceil(span_ms / 1000)) if plans else UserPlaneStats()
    finally:
        emu.stop()

    outcomes.sort(key=lambda o: o.t_start_ms)
    marks = emit_event_marks(outcomes) + session_marks(plans, established)
    dataset = align(samples, marks, phases, interval_ms=interval,
                    metadata=_metadata(s, transport.value, exit))
    return ExperimentResult(s, dataset, outcomes, up_stats, exit, emu.tap, plans=plans)


def _run_external(s: Scenario, base_dir, pids: Mapping[VnfKind, int], idle: bool,
                  timeout_ms: int) -> ExperimentResult:
    interval = s.telemetry_interval_ms
    span_ms = s.total_span_s * 1000
    phases = experiment_phases(s)
    ev_t, ev_src = _cp_timeline(s, base_dir)
    if idle:
        ev_t, ev_src = ev_t[:0], ev_src[:0]

    target = ExternalTarget(s.target.endpoints(), timeout_ms)
    clock = WallClock()
    collector = None
    if pids:
        collector = start_collector(Backend.HOST_PROCESS_STATS, sorted(pids, key=list(VnfKind).index),
                                    interval, pids=pids, clock=clock)
    injectors = _injectors(s, target, timeout_ms)
    fired = [0] * len(injectors)
    outcomes: list[RequestOutcome] = []
    failures: list[Exception] = []
    exit = COMPLETED

    def run(src: int, i: int) -> None:
        if failures:
            return
        try:
            outcomes.append(injectors[src].fire(i, clock))
        except TargetUnreachable as exc:
            failures.append(exc)

    logger.info("phase warmup begins")
    try:
        with ThreadPoolExecutor(max_workers=32, thread_name_prefix="cpli") as pool:
            clock.sleep_until(phases[1].start_ms)
            logger.info("phase inject begins")
            for t, src in zip(ev_t, ev_src):
                if failures:
                    break
                clock.sleep_until(int(t))
                pool.submit(run, int(src), fired[int(src)])
                fired[int(src)] += 1
        if failures:
            exit = ExitStatus(ExitKind.ABORTED, str(failures[0]))
        else:
            logger.info("phase drain begins")
            clock.sleep_until(span_ms)
    finally:
        target.close()
        samples = collector.stop() if collector is not None else []

    outcomes.sort(key=lambda o: o.t_start_ms)
    samples = [x for x in samples if x.t_ms <= span_ms]
    dataset = align(samples, emit_event_marks(outcomes), phases, interval_ms=interval,
                    metadata=_metadata(s, "tcp", exit))
    return ExperimentResult(s, dataset, outcomes, UserPlaneStats(), exit)


def export_result(result: ExperimentResult, out_dir: str | Path, *, export_tap: bool = True,
                  schedules: Mapping[str, EventSchedule] | None = None) -> dict:
    """Write every artifact of a run into ``out_dir`` and return the telemetry manifest."""
    out = Path(out_dir)
    manifest = export_csv(result.dataset, out)
    outcomes_to_csv(result.outcomes, out / "outcomes.csv")
    result.up_stats.to_csv(out / "userplane.csv")
    if result.scenario is not None:
        (out / "scenario.json").write_text(serialize_scenario(result.scenario))
    if export_tap and result.tap is not None:
        result.tap.to_csv(out / "tap.csv")
    for name, schedule in (schedules or {}).items():
        schedule.to_csv(out / name)
    result.out_dir = out
    return manifest


def load_result(out_dir: str | Path) -> ExperimentResult:
    """Rebuild a result from an export directory, using the CSV files only."""
    out = Path(out_dir)
    dataset = import_dataset(out)
    outcomes = read_outcomes(out / "outcomes.csv") if (out / "outcomes.csv").exists() else []
    up = out / "userplane.csv"
    up_stats = UserPlaneStats.read_csv(up) if up.exists() else UserPlaneStats()
    up_stats.sessions = sum(1 for e in dataset.events if e.kind == "session_start")
    meta = dataset.metadata
    exit = ExitStatus(ExitKind(meta.get("exit", "Completed")), meta.get("exit_reason"))
    scenario = None
    if (out / "scenario.json").exists():
        scenario = Scenario.model_validate_json((out / "scenario.json").read_text())
    return ExperimentResult(scenario, dataset, outcomes, up_stats, exit, out_dir=out)


"""Declarative experiment descriptions.

A scenario is a strict JSON document: unknown keys are rejected at parse time,
while semantic problems (negative durations, missing traffic for a user-plane
run, ...) are reported as data by :func:`validate_scenario`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Literal, Union

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, model_validator

from corebench.kinds import ProcedureKind, Scope, TargetKind, VnfKind, servable

DEFAULT_WARMUP_S = 5
DEFAULT_DRAIN_S = 10
DEFAULT_TELEMETRY_INTERVAL_MS = 1000
MIN_TELEMETRY_INTERVAL_MS = 100
DEFAULT_MTU = 1500


class ScenarioError(ValueError):
    """Base class for scenario parsing errors."""


class ScenarioSyntaxError(ScenarioError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownField(ScenarioError):
    def __init__(self, paths: list[str]):
        super().__init__("unknown field(s): " + ", ".join(paths))
        self.paths = paths


class ScenarioSchemaError(ScenarioError):
    pass


class ArrivalProcess(str, Enum):
    POISSON = "Poisson"
    UNIFORM = "Uniform"


def _as_tuple(value: Any) -> Any:
    return tuple(value) if isinstance(value, list) else value


# JSON arrays become tuples; element types stay strictly checked
_Seq = BeforeValidator(_as_tuple)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True)


class Sequential(_Strict):
    kind: Literal["Sequential"] = "Sequential"
    gap_ms: int


class Random(_Strict):
    kind: Literal["Random"] = "Random"
    rate_per_s: float
    process: ArrivalProcess


class Burst(_Strict):
    kind: Literal["Burst"] = "Burst"
    count: int
    window_s: int
    offset_s: int = 0


class TraceDriven(_Strict):
    kind: Literal["TraceDriven"] = "TraceDriven"
    series_ref: str
    window_s: int = 10
    # dataset activity -> request count multiplier
    scale: float = 1.0
    # cells to aggregate from the series file; None means every cell in it
    cells: Annotated[tuple[str, ...], _Seq] | None = None


ArrivalSpec = Annotated[Union[Sequential, Random, Burst, TraceDriven], Field(discriminator="kind")]


class TopologyEntry(_Strict):
    vnf: VnfKind
    endpoint: str


class TargetSpec(_Strict):
    kind: TargetKind = TargetKind.EMULATOR
    topology: Annotated[tuple[TopologyEntry, ...], _Seq] = ()
    # None selects the bundled calibration file
    emulator_config: str | None = None

    def endpoints(self) -> dict[VnfKind, str]:
        return {entry.vnf: entry.endpoint for entry in self.topology}


class ProcedureLoad(_Strict):
    procedure: ProcedureKind
    target_vnf: VnfKind | None = None
    stub_upstreams: bool = False
    arrival: ArrivalSpec
    ue_count: int = 1
    gnb_count: int = 1


class FlowSpec(_Strict):
    """Synthetic flow: constant or uniform sizes, constant or exponential gaps."""

    packet_size_bytes: int | Annotated[tuple[int, int], _Seq]
    inter_arrival_ms: float
    inter_arrival: Literal["constant", "exponential"] = "constant"
    duration_s: float
    direction_ratio: float
    mtu: int = DEFAULT_MTU


class FlowSource(_Strict):
    trace: str | None = None
    synthetic: FlowSpec | None = None


class TrafficLoad(_Strict):
    # None plans one session per arrival event
    sessions: int | None = None
    mix: dict[str, float] | str
    profiles: dict[str, FlowSource]
    # None lets every session run for its source's natural length
    session_duration_s: int | None = None
    arrival: ArrivalSpec


class Scenario(_Strict):
    name: str = "scenario"
    scope: Scope
    target: TargetSpec = TargetSpec()
    procedures: Annotated[tuple[ProcedureLoad, ...], _Seq] = ()
    traffic: TrafficLoad | None = None
    duration_s: int
    warmup_s: int = DEFAULT_WARMUP_S
    drain_s: int = DEFAULT_DRAIN_S
    seed: int = 0
    telemetry_interval_ms: int = DEFAULT_TELEMETRY_INTERVAL_MS
    output_dir: str = "results"

    @model_validator(mode="before")
    @classmethod
    def _expand_shorthand(cls, data: Any) -> Any:
        # {"procedure": ..., "arrival": ...} at top level is a one-load scenario
        if isinstance(data, dict) and "procedure" in data:
            data = dict(data)
            load = {"procedure": data.pop("procedure")}
            if "arrival" in data:
                load["arrival"] = data.pop("arrival")
            if "procedures" in data:
                raise ValueError("use either 'procedure' or 'procedures', not both")
            data["procedures"] = [load]
        return data

    @property
    def total_span_s(self) -> int:
        return self.warmup_s + self.duration_s + self.drain_s

    def digest(self) -> str:
        return hashlib.sha256(serialize_scenario(self).encode()).hexdigest()


def parse_scenario(document: str | bytes) -> Scenario:
    """Parse a scenario JSON document and apply defaults.

    Raises:
        ScenarioSyntaxError: the text is not valid JSON.
        UnknownField: a key is not part of the schema.
        ScenarioSchemaError: a value has the wrong type or an enum is unknown.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        json.loads(document)
    except json.JSONDecodeError as exc:
        raise ScenarioSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    try:
        return Scenario.model_validate_json(document)
    except ValidationError as exc:
        unknown = [_loc(err["loc"]) for err in exc.errors() if err["type"] == "extra_forbidden"]
        if unknown:
            raise UnknownField(unknown) from None
        raise ScenarioSchemaError(str(exc)) from None


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def serialize_scenario(s: Scenario) -> str:
    return json.dumps(s.model_dump(mode="json", exclude_none=True), indent=2) + "\n"


def _loc(loc: tuple) -> str:
    return ".".join(str(part) for part in loc)


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def messages(self) -> list[str]:
        return [v.message for v in self.violations]


def validate_scenario(s: Scenario) -> ValidationReport:
    """Check every invariant of a parsed scenario; an empty report means runnable."""
    out: list[Violation] = []

    def bad(path: str, message: str) -> None:
        out.append(Violation(path, message))

    if s.duration_s <= 0:
        bad("duration_s", "duration_s must be > 0")
    if s.warmup_s < 0:
        bad("warmup_s", "warmup_s must be >= 0")
    if s.drain_s < 0:
        bad("drain_s", "drain_s must be >= 0")
    if s.telemetry_interval_ms < MIN_TELEMETRY_INTERVAL_MS:
        bad("telemetry_interval_ms", f"telemetry_interval_ms must be >= {MIN_TELEMETRY_INTERVAL_MS}")
    if not 0 <= s.seed < 2**64:
        bad("seed", "seed must be a 64-bit unsigned integer")

    wants_cp = s.scope in (Scope.CONTROL_PLANE, Scope.JOINT)
    wants_up = s.scope in (Scope.USER_PLANE, Scope.JOINT)
    if wants_cp and not s.procedures:
        bad("procedures", f"scope {s.scope.value} requires at least one procedure")
    if wants_up and s.traffic is None:
        bad("traffic", f"scope {s.scope.value} requires a traffic section")

    for i, load in enumerate(s.procedures):
        path = f"procedures.{i}"
        if load.ue_count < 1:
            bad(f"{path}.ue_count", "ue_count must be >= 1")
        if load.gnb_count < 1:
            bad(f"{path}.gnb_count", "gnb_count must be >= 1")
        if load.target_vnf is not None and not servable(load.procedure, load.target_vnf):
            bad(f"{path}.target_vnf", "procedure not servable by VNF")
        _check_arrival(load.arrival, s.duration_s, f"{path}.arrival", bad)

    if s.traffic is not None:
        _check_traffic(s.traffic, s.duration_s, bad)

    _check_target(s, bad)
    return ValidationReport(tuple(out))


def _check_arrival(spec, duration_s: int, path: str, bad) -> None:
    if isinstance(spec, Sequential):
        if spec.gap_ms < 0:
            bad(f"{path}.gap_ms", "gap_ms must be >= 0")
        elif spec.gap_ms == 0:
            bad(f"{path}.gap_ms", "gap_ms of 0 gives an unbounded event count")
    elif isinstance(spec, Random):
        if spec.rate_per_s <= 0:
            bad(f"{path}.rate_per_s", "rate_per_s must be > 0")
    elif isinstance(spec, Burst):
        if spec.count < 1:
            bad(f"{path}.count", "count must be >= 1")
        if spec.window_s <= 0:
            bad(f"{path}.window_s", "window_s must be > 0")
        if spec.offset_s < 0:
            bad(f"{path}.offset_s", "offset_s must be >= 0")
        if spec.offset_s + spec.window_s > duration_s:
            bad(path, "arrival window exceeds duration")
    elif isinstance(spec, TraceDriven):
        if spec.window_s <= 0:
            bad(f"{path}.window_s", "window_s must be > 0")
        if spec.scale < 0:
            bad(f"{path}.scale", "scale must be >= 0")


def _check_traffic(t: TrafficLoad, duration_s: int, bad) -> None:
    if t.sessions is not None and t.sessions < 1:
        bad("traffic.sessions", "sessions must be >= 1")
    if t.session_duration_s is not None and t.session_duration_s <= 0:
        bad("traffic.session_duration_s", "session_duration_s must be > 0")
    if isinstance(t.mix, dict):
        if any(p < 0 for p in t.mix.values()):
            bad("traffic.mix", "mix probabilities must be >= 0")
        elif sum(t.mix.values()) <= 0:
            bad("traffic.mix", "mix must have at least one positive entry")
        for service, p in t.mix.items():
            if p > 0 and service not in t.profiles:
                bad(f"traffic.profiles.{service}", "service with nonzero probability has no flow source")
    for service, src in t.profiles.items():
        path = f"traffic.profiles.{service}"
        if (src.trace is None) == (src.synthetic is None):
            bad(path, "flow source needs exactly one of 'trace' or 'synthetic'")
        if src.synthetic is not None:
            _check_flow(src.synthetic, f"{path}.synthetic", bad)
    _check_arrival(t.arrival, duration_s, "traffic.arrival", bad)


def _check_flow(f: FlowSpec, path: str, bad) -> None:
    sizes = f.packet_size_bytes if isinstance(f.packet_size_bytes, tuple) else (f.packet_size_bytes,) * 2
    if sizes[0] > sizes[1]:
        bad(f"{path}.packet_size_bytes", "size range is inverted")
    if sizes[0] < 1 or sizes[1] > f.mtu:
        bad(f"{path}.packet_size_bytes", f"packet sizes must lie in [1, {f.mtu}]")
    if f.inter_arrival_ms <= 0:
        bad(f"{path}.inter_arrival_ms", "inter_arrival_ms must be > 0")
    if f.duration_s <= 0:
        bad(f"{path}.duration_s", "duration_s must be > 0")
    if not 0.0 <= f.direction_ratio <= 1.0:
        bad(f"{path}.direction_ratio", "direction_ratio must lie in [0, 1]")


def _check_target(s: Scenario, bad) -> None:
    from corebench.emulator.chains import vnfs_involved

    target = s.target
    seen: set[VnfKind] = set()
    for i, entry in enumerate(target.topology):
        if entry.vnf in seen:
            bad(f"target.topology.{i}", f"duplicate topology entry for {entry.vnf.value}")
        seen.add(entry.vnf)
        host, _, port = entry.endpoint.rpartition(":")
        if not host or not port.isdigit():
            bad(f"target.topology.{i}.endpoint", "endpoint must be host:port")
    if target.kind is TargetKind.EXTERNAL:
        if s.scope is not Scope.CONTROL_PLANE:
            bad("target.kind", "user-plane traffic needs the bundled emulator target")
        needed: set[VnfKind] = set()
        for load in s.procedures:
            if load.target_vnf is None or servable(load.procedure, load.target_vnf):
                needed |= vnfs_involved(load.procedure, load.target_vnf, load.stub_upstreams)
        missing = sorted(v.value for v in needed - seen)
        if missing:
            bad("target.topology", "external topology lacks " + ", ".join(missing))
        if any(load.stub_upstreams for load in s.procedures):
            bad("procedures", "stub_upstreams is only available on the emulator target")

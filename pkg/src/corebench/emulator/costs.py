"""Resource cost model of the emulated core.

CPU is accounted internally in integer picoseconds so that totals are exactly
additive however messages and packets are batched; public snapshots convert
to microseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from corebench.kinds import VnfKind

PS_PER_US = 1_000_000
PS_PER_NS = 1_000


@dataclass(frozen=True)
class ResourceCostModel:
    step_cpu_us: dict[tuple[VnfKind, str], float] = field(default_factory=dict)
    context_mem_bytes: dict[tuple[VnfKind, str], int] = field(default_factory=dict)
    upf_pkt_cpu_us: float = 0.0
    upf_byte_cpu_ns: float = 0.0
    upf_base_mem_bytes: int = 0
    # resident memory of the other VNFs; the UPF uses upf_base_mem_bytes
    base_mem_bytes: dict[VnfKind, int] = field(default_factory=dict)
    calibration: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        numbers = [*self.step_cpu_us.values(), *self.context_mem_bytes.values(),
                   *self.base_mem_bytes.values(),
                   self.upf_pkt_cpu_us, self.upf_byte_cpu_ns, self.upf_base_mem_bytes]
        if any(v < 0 for v in numbers):
            raise ValueError("cost model values must be >= 0")

    def step_ps(self, vnf: VnfKind, op: str) -> int:
        return round(self.step_cpu_us.get((vnf, op), 0.0) * PS_PER_US)

    def context_bytes(self, vnf: VnfKind, context_kind: str) -> int:
        return int(self.context_mem_bytes.get((vnf, context_kind), 0))

    def base_mem(self, vnf: VnfKind) -> int:
        if vnf is VnfKind.UPF:
            return int(self.upf_base_mem_bytes)
        return int(self.base_mem_bytes.get(vnf, 0))

    @property
    def pkt_ps(self) -> int:
        return round(self.upf_pkt_cpu_us * PS_PER_US)

    @property
    def byte_ps(self) -> int:
        return round(self.upf_byte_cpu_ns * PS_PER_NS)

    def packets_cost_ps(self, packets: int, nbytes: int) -> int:
        return packets * self.pkt_ps + nbytes * self.byte_ps

    def packet_cost_us(self, size_bytes: int) -> float:
        return self.packets_cost_ps(1, size_bytes) / PS_PER_US

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ResourceCostModel:
        known = {"step_cpu_us", "context_mem_bytes", "upf_pkt_cpu_us", "upf_byte_cpu_ns",
                 "upf_base_mem_bytes", "base_mem_bytes", "calibration", "comment"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown cost-model keys: {sorted(extra)}")

        def nested(key: str) -> dict[tuple[VnfKind, str], Any]:
            return {(VnfKind(vnf), name): value
                    for vnf, table in data.get(key, {}).items() for name, value in table.items()}

        return cls(
            step_cpu_us={k: float(v) for k, v in nested("step_cpu_us").items()},
            context_mem_bytes={k: int(v) for k, v in nested("context_mem_bytes").items()},
            upf_pkt_cpu_us=float(data.get("upf_pkt_cpu_us", 0.0)),
            upf_byte_cpu_ns=float(data.get("upf_byte_cpu_ns", 0.0)),
            upf_base_mem_bytes=int(data.get("upf_base_mem_bytes", 0)),
            base_mem_bytes={VnfKind(k): int(v) for k, v in data.get("base_mem_bytes", {}).items()},
            calibration=dict(data.get("calibration", {})),
        )

    def to_dict(self) -> dict[str, Any]:
        def unnest(table: dict[tuple[VnfKind, str], Any]) -> dict[str, dict[str, Any]]:
            out: dict[str, dict[str, Any]] = {}
            for (vnf, name), value in sorted(table.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
                out.setdefault(vnf.value, {})[name] = value
            return out

        return {
            "step_cpu_us": unnest(self.step_cpu_us),
            "context_mem_bytes": unnest(self.context_mem_bytes),
            "upf_pkt_cpu_us": self.upf_pkt_cpu_us,
            "upf_byte_cpu_ns": self.upf_byte_cpu_ns,
            "upf_base_mem_bytes": self.upf_base_mem_bytes,
            "base_mem_bytes": {k.value: v for k, v in sorted(self.base_mem_bytes.items(), key=lambda kv: kv[0].value)},
            "calibration": self.calibration,
        }


def load_cost_model(path: str | Path | None = None) -> ResourceCostModel:
    """Read a cost-model JSON file; ``None`` loads the bundled calibration."""
    if path is None:
        text = resources.files("corebench.data").joinpath("cost_model.json").read_text()
    else:
        text = Path(path).read_text()
    return ResourceCostModel.from_dict(json.loads(text))

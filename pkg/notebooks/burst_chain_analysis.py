"""Where a burst of PDU session setups spends its CPU.

Runs the bundled 200-request burst on the emulator, then breaks the traffic
down per signaling hop and per VNF.
"""

# %%
from collections import Counter

from corebench.emulator.chains import vnfs_involved
from corebench.kinds import ProcedureKind, VnfKind
from corebench.orchestrator import run_experiment
from corebench.resources import data_root
from corebench.scenario import load_scenario

scenario = load_scenario(data_root() / "scenarios" / "burst_pdu_200.json")
result = run_experiment(scenario)
print(result.exit, len(result.outcomes), "requests")

# %%
# hops seen on the wire during injection; the startup registrations and heartbeats are excluded
hops = Counter((e.origin, e.target, e.service_op) for e in result.tap.entries()
               if e.request_id.startswith("cp"))
for (origin, target, op), n in sorted(hops.items(), key=lambda kv: -kv[1]):
    print(f"{origin:>8} -> {target:<4} {op:<24} {n}")

# %%
print("VNFs on the chain:", sorted(v.value for v in vnfs_involved(ProcedureKind.PDU_SESSION_SETUP)))
inject = result.dataset.phase("inject")
for vnf in (VnfKind.AMF, VnfKind.SMF, VnfKind.UDM, VnfKind.UDR, VnfKind.NRF, VnfKind.UPF):
    samples = result.dataset.for_vnf(vnf, "inject")
    peak = max(s.cpu_millicores for s in samples)
    grown = samples[-1].mem_bytes - samples[0].mem_bytes
    print(f"{vnf.value:<4} peak {peak:7.2f} mc   context memory +{grown} B over {inject.end_ms - inject.start_ms:.0f} ms")

# %%
latency = sorted(o.t_end_ms - o.t_start_ms for o in result.outcomes)
print("modeled latency ms: median", latency[len(latency) // 2], "max", latency[-1])

"""UPF CPU against the number of concurrent YouTube sessions.

The emulator charges the UPF a fixed cost per packet and per byte, so CPU
should grow linearly with the session count while memory stays flat.
"""

# %%
import json

from corebench.orchestrator import run_experiment
from corebench.reporting import linear_fit, load_table1, summarize
from corebench.resources import data_root
from corebench.scenario import load_scenario, parse_scenario

base = json.loads((data_root() / "scenarios" / "upf_youtube_100.json").read_text())


def sessions(n: int):
    doc = dict(base, name=f"youtube-{n}", duration_s=610)
    doc["traffic"] = dict(base["traffic"], sessions=n,
                          arrival={"kind": "Burst", "count": n, "window_s": 1, "offset_s": 0})
    return parse_scenario(json.dumps(doc))


levels = (100, 200, 300, 400, 500)
runs = [run_experiment(sessions(n)) for n in levels]
table = summarize(runs)

# %%
published = load_table1()
for row, ref_cpu, ref_mem in zip(table.rows, published.cpu["YouTube"], published.mem_mb["YouTube"]):
    print(f"{row.level:>4} sessions: {row.cpu_millicores:7.1f} mc (published {ref_cpu:5.0f}), "
          f"{row.mem_bytes / 1e6:.2f} MB (published {ref_mem})")

# %%
slope, intercept, r2 = linear_fit(levels, [r.cpu_millicores for r in table.rows])
print(f"slope {slope:.4f} mc per session, intercept {intercept:.3f} mc, R^2 {r2:.6f}")

# %%
scenario = load_scenario(data_root() / "scenarios" / "upf_mixed_100.json")
mixed = summarize(run_experiment(scenario)).rows[0]
print(f"Mixed at 100 sessions: {mixed.cpu_millicores:.1f} mc (published {published.cpu['Mixed'][0]})")

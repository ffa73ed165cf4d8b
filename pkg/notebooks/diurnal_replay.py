"""Twelve hours of cell-driven session arrivals through the UPF.

Replays a low-load cell and a cluster of busy neighbouring cells, then
compares the active-session curve with UPF CPU.
"""

# %%
import numpy as np

from corebench.datasets import classify_cells, load_cell_series
from corebench.kinds import VnfKind
from corebench.orchestrator import run_experiment
from corebench.resources import data_root
from corebench.scenario import load_scenario

cells = load_cell_series(data_root() / "cells" / "milan_high.csv")
print({c: cls.value for c, cls in classify_cells(cells).items()})

# %%
runs = {level: run_experiment(load_scenario(data_root() / "scenarios" / f"diurnal_{level}.json"))
        for level in ("low", "high")}

# %%
for level, result in runs.items():
    cpu = np.array([s.cpu_millicores for s in result.dataset.for_vnf(VnfKind.UPF)])
    active = result.up_stats.active_sessions
    hourly = cpu[1:].reshape(-1, 3600).mean(axis=1)
    print(f"{level}: {result.up_stats.sessions} sessions, peak {result.up_stats.peak_active_sessions} active, "
          f"peak UPF {cpu.max():.1f} mc")
    print("  hourly mean mc:", " ".join(f"{h:.0f}" for h in hourly))
    print("  corr(active sessions, cpu):", round(float(np.corrcoef(active[: cpu.size - 1], cpu[1:])[0, 1]), 3))

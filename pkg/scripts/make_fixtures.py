"""Regenerate the synthetic fixtures bundled under ``src/corebench/data``.

Everything here is deterministic; rerunning the script rewrites identical
files. The fixtures are synthetic stand-ins shaped like the public datasets
the toolkit ingests:

* ``profiles/*.profile.csv``: 600 one-second bins per service. Each profile
  is calibrated so that one session costs the UPF exactly the per-session
  CPU rate listed under ``calibration`` in ``cost_model.json``.
* ``mix/netmob_mix.json``: a four-service usage mix.
* ``cells/milan_low.csv``: one cell over 12 hours (72 ten-minute bins).
* ``cells/milan_high.csv``: five neighbouring cells whose sum peaks at
  2000 session arrivals per bin, i.e. about 2000 concurrent 10-minute
  sessions at the busy hour.
* ``scenarios/*.json``: example scenarios covering every schema enum.
"""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

import numpy as np

from corebench.arrivals import make_rng
from corebench.datasets import CellLoadSeries, ServiceTraceProfile, write_cell_series, write_trace_profile
from corebench.emulator.costs import load_cost_model

ROOT = Path(__file__).resolve().parents[1] / "src" / "corebench" / "data"
FIXTURE_SEED = 20250101
MTU = 1500
BINS = 600

# per-service shape: (mean downlink B/s shape, uplink fraction, burstiness)
SERVICES = {
    "YouTube": ("youtube", 0.04),
    "Instagram": ("instagram", 0.06),
    "Browsing": ("browsing", 0.10),
    "Gaming": ("gaming", 0.45),
}


def bin_cost_ps(nbytes: np.ndarray, pkt_ps: int, byte_ps: int) -> np.ndarray:
    return pkt_ps * (-(-nbytes // MTU)) + byte_ps * nbytes


def _shape(service: str, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(BINS)
    if service == "YouTube":
        # segment fetches every 4-6 s on top of a thin steady stream
        w = np.full(BINS, 0.15)
        k = 0
        while k < BINS:
            w[k:k + 2] += rng.uniform(2.0, 3.0)
            k += int(rng.integers(4, 7))
    elif service == "Instagram":
        # scroll sessions: dense bursts separated by short pauses
        w = np.full(BINS, 0.1)
        k = 0
        while k < BINS:
            n = int(rng.integers(5, 20))
            w[k:k + n] += rng.gamma(2.0, 1.0, size=min(n, BINS - k))
            k += n + int(rng.integers(2, 10))
    elif service == "Browsing":
        # page loads triggered by user interaction, idle in between
        w = np.full(BINS, 0.02)
        k = int(rng.integers(0, 5))
        while k < BINS:
            n = int(rng.integers(1, 4))
            w[k:k + n] += rng.uniform(3.0, 8.0)
            k += n + int(rng.integers(5, 25))
    else:
        # small, steady game-state updates with mild jitter
        w = 1.0 + 0.1 * np.sin(2 * np.pi * t / 60.0) + rng.normal(0, 0.05, BINS)
    return np.clip(w, 0.0, None)


def _cost(up: np.ndarray, down: np.ndarray, pkt_ps: int, byte_ps: int) -> int:
    return int(bin_cost_ps(up, pkt_ps, byte_ps).sum() + bin_cost_ps(down, pkt_ps, byte_ps).sum())


def _single_cost(b: int, pkt_ps: int, byte_ps: int) -> int:
    return pkt_ps * -(-b // MTU) + byte_ps * b


def _fill_last(remaining: int, pkt_ps: int, byte_ps: int, guess: int) -> tuple[int, int]:
    """Downlink and uplink byte counts whose combined UPF cost is exactly ``remaining``."""
    d = max(0, guess)
    while _single_cost(d, pkt_ps, byte_ps) > remaining:
        d -= 1
    for down in range(d, -1, -1):
        rem = remaining - _single_cost(down, pkt_ps, byte_ps)
        if rem == 0:
            return down, 0
        k = 1
        while k * pkt_ps < rem:
            u, r = divmod(rem - k * pkt_ps, byte_ps)
            if r == 0 and (k - 1) * MTU < u <= k * MTU:
                return down, int(u)
            k += 1
    raise ValueError("cannot hit the calibration target exactly")


def make_profile(service: str, rate_us_per_s: float, rng: np.random.Generator, pkt_ps: int,
                 byte_ps: int) -> ServiceTraceProfile:
    _, up_frac = SERVICES[service]
    shape = _shape(service, rng)
    target = round(rate_us_per_s * BINS * 1_000_000)

    def scaled(scale: float) -> tuple[np.ndarray, np.ndarray]:
        down = np.floor(shape[:-1] * scale).astype(np.int64)
        up = np.floor(shape[:-1] * scale * up_frac).astype(np.int64)
        return up, down

    # bisection on the byte scale leaves roughly one bin's worth of budget for the last bin
    per_bin = target / BINS
    lo, hi = 0.0, 1e9
    for _ in range(200):
        mid = (lo + hi) / 2
        up, down = scaled(mid)
        if _cost(up, down, pkt_ps, byte_ps) <= target - per_bin:
            lo = mid
        else:
            hi = mid
    up, down = scaled(lo)
    remaining = target - _cost(up, down, pkt_ps, byte_ps)
    guess = int(remaining / (byte_ps + pkt_ps / MTU))
    d_last, u_last = _fill_last(remaining, pkt_ps, byte_ps, guess)
    up = np.append(up, u_last)
    down = np.append(down, d_last)
    assert _cost(up, down, pkt_ps, byte_ps) == target
    return ServiceTraceProfile(service, 1, up, down)


def diurnal(bins: int, low: float, high: float, peak_bin: int, width: float, plateau: int = 0) -> np.ndarray:
    """Smooth daytime ramp peaking at ``peak_bin``, with a flat top of ``plateau`` bins."""
    x = np.arange(bins, dtype=float)
    dist = np.maximum(np.abs(x - peak_bin) - plateau / 2.0, 0.0)
    return low + (high - low) * np.exp(-0.5 * (dist / width) ** 2)


def _split(total: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Split integer totals across cells by largest remainder, conserving each total."""
    quotas = total[:, None] * weights[None, :] / weights.sum()
    base = np.floor(quotas).astype(np.int64)
    short = total - base.sum(axis=1)
    order = np.argsort(-(quotas - base), axis=1, kind="stable")
    for i, n in enumerate(short):
        base[i, order[i, :n]] += 1
    return base


def make_cells(rng: np.random.Generator) -> tuple[dict[str, CellLoadSeries], dict[str, CellLoadSeries]]:
    start = 1_383_264_000  # 2013-11-01 00:00 UTC, the start of the Milan collection
    bins = 72
    low = np.round(diurnal(bins, 120, 380, 48, 14)).astype(np.int64)
    low_series = {"cell-4259": CellLoadSeries(frozenset(["cell-4259"]), 600, start, low.astype(float))}

    high_total = np.round(diurnal(bins, 500, 2000, 50, 16, plateau=3)).astype(np.int64)
    weights = np.array([0.26, 0.22, 0.20, 0.17, 0.15])
    jitter = rng.uniform(0.95, 1.05, size=(bins, 5))
    parts = np.stack([_split(np.array([t]), weights * j)[0] for t, j in zip(high_total, jitter)])
    names = [f"cell-{n}" for n in (5060, 5061, 5160, 5161, 5162)]
    high_series = {name: CellLoadSeries(frozenset([name]), 600, start, parts[:, k].astype(float))
                   for k, name in enumerate(names)}
    return low_series, high_series


TRACES = {name: {"trace": f"bundled:profiles/{stem}.profile.csv"} for name, (stem, _) in SERVICES.items()}


def scenarios() -> dict[str, dict]:
    burst = {"kind": "Burst", "count": 200, "window_s": 10, "offset_s": 15}
    return {
        "burst_pdu_200": {
            "name": "burst-pdu-200", "scope": "ControlPlane", "procedure": "PduSessionSetup",
            "arrival": burst, "duration_s": 45, "warmup_s": 5, "drain_s": 10, "seed": 7,
        },
        "registration_sequential": {
            "name": "registration-sequential", "scope": "ControlPlane",
            "procedures": [{"procedure": "Registration", "target_vnf": "AMF", "ue_count": 50, "gnb_count": 5,
                            "arrival": {"kind": "Sequential", "gap_ms": 500}}],
            "duration_s": 30, "seed": 1,
        },
        "single_vnf_profiling": {
            "name": "single-vnf-profiling", "scope": "ControlPlane",
            "procedures": [
                {"procedure": "Authentication", "target_vnf": "AUSF", "stub_upstreams": True, "ue_count": 100,
                 "arrival": {"kind": "Random", "rate_per_s": 20, "process": "Poisson"}},
                {"procedure": "AuthVectorGeneration", "target_vnf": "UDM", "stub_upstreams": True,
                 "ue_count": 100, "arrival": {"kind": "Random", "rate_per_s": 10, "process": "Uniform"}},
                {"procedure": "SubscriptionDataMgmt", "target_vnf": "UDR", "ue_count": 100,
                 "arrival": {"kind": "Sequential", "gap_ms": 250}},
                {"procedure": "PduSessionSetup", "target_vnf": "SMF", "ue_count": 100,
                 "arrival": {"kind": "Burst", "count": 50, "window_s": 5, "offset_s": 10}},
                {"procedure": "NrfDiscovery", "target_vnf": "NRF",
                 "arrival": {"kind": "Sequential", "gap_ms": 1000}},
                {"procedure": "Heartbeat", "arrival": {"kind": "Sequential", "gap_ms": 2000}},
            ],
            "duration_s": 30, "seed": 3,
        },
        "trace_driven_registration": {
            "name": "trace-driven-registration", "scope": "ControlPlane",
            "procedures": [{"procedure": "Registration", "ue_count": 500, "gnb_count": 1,
                            "arrival": {"kind": "TraceDriven", "series_ref": "bundled:cells/milan_low.csv",
                                        "window_s": 10, "scale": 0.1}}],
            "duration_s": 600, "seed": 11,
        },
        "upf_youtube_100": {
            "name": "upf-youtube-100", "scope": "UserPlane",
            "traffic": {"sessions": 100, "mix": {"YouTube": 1.0}, "profiles": {"YouTube": TRACES["YouTube"]},
                        "arrival": {"kind": "Burst", "count": 100, "window_s": 1, "offset_s": 0}},
            "duration_s": 600, "warmup_s": 5, "drain_s": 10, "seed": 100,
        },
        "upf_mixed_100": {
            "name": "upf-mixed-100", "scope": "UserPlane",
            "traffic": {"sessions": 100, "mix": "bundled:mix/netmob_mix.json", "profiles": TRACES,
                        "arrival": {"kind": "Burst", "count": 100, "window_s": 1, "offset_s": 0}},
            "duration_s": 600, "seed": 100,
        },
        "synthetic_flows": {
            "name": "synthetic-flows", "scope": "UserPlane",
            "traffic": {
                "mix": {"Gaming": 0.5, "Bulk": 0.5},
                "profiles": {
                    "Gaming": {"synthetic": {"packet_size_bytes": 100, "inter_arrival_ms": 5.0,
                                             "inter_arrival": "constant", "duration_s": 60,
                                             "direction_ratio": 0.5}},
                    "Bulk": {"synthetic": {"packet_size_bytes": [200, 1500], "inter_arrival_ms": 2.0,
                                           "inter_arrival": "exponential", "duration_s": 60,
                                           "direction_ratio": 0.9}},
                },
                "session_duration_s": 30,
                "arrival": {"kind": "Random", "rate_per_s": 2, "process": "Poisson"},
            },
            "duration_s": 60, "seed": 5,
        },
        "diurnal_low": {
            "name": "diurnal-low", "scope": "UserPlane",
            "traffic": {"mix": "bundled:mix/netmob_mix.json", "profiles": TRACES,
                        "arrival": {"kind": "TraceDriven", "series_ref": "bundled:cells/milan_low.csv",
                                    "window_s": 10, "scale": 1.0}},
            "duration_s": 43200, "warmup_s": 0, "drain_s": 0, "seed": 12,
        },
        "diurnal_high": {
            "name": "diurnal-high", "scope": "UserPlane",
            "traffic": {"mix": "bundled:mix/netmob_mix.json", "profiles": TRACES,
                        "arrival": {"kind": "TraceDriven", "series_ref": "bundled:cells/milan_high.csv",
                                    "window_s": 10, "scale": 1.0}},
            "duration_s": 43200, "warmup_s": 0, "drain_s": 0, "seed": 12,
        },
        "joint_registration_video": {
            "name": "joint-registration-video", "scope": "Joint",
            "procedures": [{"procedure": "Registration", "ue_count": 20,
                            "arrival": {"kind": "Random", "rate_per_s": 5, "process": "Poisson"}}],
            "traffic": {"sessions": 40, "mix": {"YouTube": 0.5, "Instagram": 0.5},
                        "profiles": {"YouTube": TRACES["YouTube"], "Instagram": TRACES["Instagram"]},
                        "session_duration_s": 60,
                        "arrival": {"kind": "Burst", "count": 40, "window_s": 20, "offset_s": 0}},
            "duration_s": 90, "telemetry_interval_ms": 500, "seed": 9,
        },
        "external_core": {
            "name": "external-core", "scope": "ControlPlane",
            "target": {"kind": "External",
                       "topology": [{"vnf": v, "endpoint": f"127.0.0.1:{39000 + i}"}
                                    for i, v in enumerate(["AMF", "SMF", "AUSF", "UDM", "UDR", "NRF", "UPF", "DN"])]},
            "procedure": "Registration",
            "arrival": {"kind": "Burst", "count": 50, "window_s": 10, "offset_s": 0},
            "duration_s": 20, "warmup_s": 2, "drain_s": 3, "seed": 2,
        },
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=ROOT)
    args = parser.parse_args()
    out: Path = args.out

    costs = load_cost_model()
    rates = costs.calibration["upf_millicores_per_session"]
    for sub in ("profiles", "cells", "mix", "scenarios"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    for k, (service, (stem, _)) in enumerate(SERVICES.items()):
        rng = make_rng(FIXTURE_SEED, 100 + k)
        # millicores per session -> microseconds of CPU per second
        profile = make_profile(service, rates[service] * 1000.0, rng, costs.pkt_ps, costs.byte_ps)
        write_trace_profile(profile, out / "profiles" / f"{stem}.profile.csv")

    mix = {"Instagram": 0.50, "YouTube": 0.25, "Browsing": 0.15, "Gaming": 0.10}
    (out / "mix" / "netmob_mix.json").write_text(json.dumps(mix, indent=2, sort_keys=True) + "\n")

    low, high = make_cells(make_rng(FIXTURE_SEED, 200))
    write_cell_series(low, out / "cells" / "milan_low.csv")
    write_cell_series(high, out / "cells" / "milan_high.csv")

    for name, doc in scenarios().items():
        (out / "scenarios" / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")

    peak = max(sum(s.values[i] for s in high.values()) for i in range(72))
    print(f"wrote fixtures to {out}; high-load peak bin = {peak:.0f} arrivals, "
          f"mixed per-session rate = {math.fsum(mix[s] * rates[s] for s in mix):.3f} mc")


if __name__ == "__main__":
    main()

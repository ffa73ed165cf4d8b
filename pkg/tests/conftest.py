from __future__ import annotations

import json
from typing import Any

import pytest

from corebench.orchestrator import ExperimentResult, run_experiment
from corebench.resources import data_root
from corebench.scenario import Scenario, load_scenario, parse_scenario

SCENARIOS = data_root() / "scenarios"

# criterion id -> (passed, detail), filled by the acceptance tests
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def bundled(name: str) -> Scenario:
    return load_scenario(SCENARIOS / f"{name}.json")


def _merge(base: dict, updates: dict) -> dict:
    out = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def variant(s: Scenario, **updates: Any) -> Scenario:
    """Copy of a scenario with nested JSON-level overrides, re-parsed so defaults and checks apply."""
    doc = json.loads(s.model_dump_json(exclude_none=True))
    return parse_scenario(json.dumps(_merge(doc, updates)))


def youtube_sessions(n: int, duration_s: int = 610) -> Scenario:
    """n YouTube sessions that all start in the first inject second and end inside the inject phase."""
    return variant(bundled("upf_youtube_100"), name=f"upf-youtube-{n}", duration_s=duration_s,
                   traffic={"sessions": n, "arrival": {"kind": "Burst", "count": n, "window_s": 1}})


@pytest.fixture(scope="session")
def burst_result() -> ExperimentResult:
    return run_experiment(bundled("burst_pdu_200"))


@pytest.fixture(scope="session")
def upf_scaling() -> dict[int, ExperimentResult]:
    return {n: run_experiment(youtube_sessions(n)) for n in (100, 200, 300, 400, 500)}


@pytest.fixture(scope="session")
def upf_idle() -> ExperimentResult:
    return run_experiment(youtube_sessions(100), idle=True)


@pytest.fixture(scope="session")
def diurnal() -> dict[str, ExperimentResult]:
    return {level: run_experiment(bundled(f"diurnal_{level}")) for level in ("low", "high")}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid:>3} {'PASS' if ok else 'FAIL'}  {detail}")

"""Clocks shared by the injectors, the emulator and the telemetry collector."""

from __future__ import annotations

import threading
import time


class VirtualClock:
    """Manually advanced millisecond clock.

    Everything driven by a virtual clock is exactly reproducible and runs as
    fast as the host allows.
    """

    virtual = True

    def __init__(self, start_ms: float = 0.0):
        self._now = float(start_ms)
        self._lock = threading.Lock()

    def now_ms(self) -> float:
        with self._lock:
            return self._now

    def advance_to(self, t_ms: float) -> None:
        with self._lock:
            if t_ms < self._now:
                raise ValueError(f"virtual clock cannot go backwards ({t_ms} < {self._now})")
            self._now = float(t_ms)

    def sleep_until(self, t_ms: float) -> None:
        self.advance_to(max(t_ms, self.now_ms()))


class WallClock:
    """Monotonic wall clock with its origin at construction time."""

    virtual = False

    def __init__(self):
        self._origin = time.monotonic()

    def now_ms(self) -> float:
        return (time.monotonic() - self._origin) * 1000.0

    def sleep_until(self, t_ms: float) -> None:
        delay = (t_ms - self.now_ms()) / 1000.0
        if delay > 0:
            time.sleep(delay)

"""Injected clocks.  Functional code never reads the wall clock directly."""

from __future__ import annotations

import time


class SimClock:
    """Simulated time: ``sleep_until`` just jumps."""

    def __init__(self, start_ms: int = 0):
        self.now_ms = start_ms

    def now(self) -> int:
        return self.now_ms

    def sleep_until(self, t_ms: int):
        if t_ms > self.now_ms:
            self.now_ms = t_ms


class WallClock:
    """Milliseconds since the epoch; ``sleep_until`` really waits."""

    def now(self) -> int:
        return time.time_ns() // 1_000_000

    def sleep_until(self, t_ms: int):
        delay = (t_ms - self.now()) / 1000.0
        if delay > 0:
            time.sleep(delay)

"""Injectable clocks. All timestamps in the package are monotonic milliseconds.

The virtual clock makes scheduling, debounce and latency tests fully
deterministic: time moves only when the test (or a scripted backend)
advances it.
"""

from __future__ import annotations

import time


class MonotonicClock:
    def now(self) -> float:
        return time.monotonic() * 1000.0


class VirtualClock:
    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance(self, ms: float) -> None:
        if ms < 0:
            raise ValueError("time cannot move backwards")
        self._now += ms

    def set(self, t: float) -> None:
        if t < self._now:
            raise ValueError("time cannot move backwards")
        self._now = t

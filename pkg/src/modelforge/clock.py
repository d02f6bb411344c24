"""Clock and timer abstractions.

All time-dependent behavior (schedules, idle sweeps, retrain intervals) goes
through a Clock so tests can drive the platform on a virtual clock with no
wall-clock sleeps.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from dataclasses import dataclass, field
from typing import Callable


class Clock:
    """Wall clock. ``now()`` returns epoch seconds as float."""

    def now(self) -> float:
        return time.time()


class VirtualClock(Clock):
    """Manually advanced clock for deterministic tests."""

    def __init__(self, start: float = 1_700_000_000.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot advance a clock backwards")
        self._now += seconds

    def advance_to(self, target: float) -> None:
        if target < self._now:
            raise ValueError("cannot advance a clock backwards")
        self._now = target


@dataclass(order=True)
class _Timer:
    due_at: float
    seq: int
    callback: Callable[[], None] = field(compare=False)
    interval: float | None = field(compare=False, default=None)
    cancelled: bool = field(compare=False, default=False)


class TimerHandle:
    def __init__(self, timer: _Timer):
        self._timer = timer

    def cancel(self) -> None:
        self._timer.cancelled = True

    @property
    def cancelled(self) -> bool:
        return self._timer.cancelled


class Scheduler:
    """Min-heap of timers fired by explicit ``fire_due`` calls.

    The platform calls ``fire_due(clock.now())`` either from a background
    ticker (wall clock) or right after ``VirtualClock.advance`` (tests).
    Timers fire in (due_at, registration order) so runs are reproducible.
    A repeating timer that fell several intervals behind fires once per
    missed interval, which is what gives virtual-clock tests exact tick
    counts.
    """

    def __init__(self):
        self._heap: list[_Timer] = []
        self._counter = itertools.count()
        self._lock = threading.Lock()

    def call_at(self, due_at: float, callback: Callable[[], None]) -> TimerHandle:
        timer = _Timer(due_at, next(self._counter), callback)
        with self._lock:
            heapq.heappush(self._heap, timer)
        return TimerHandle(timer)

    def call_every(self, first_at: float, interval: float, callback: Callable[[], None]) -> TimerHandle:
        if interval <= 0:
            raise ValueError("interval must be positive")
        timer = _Timer(first_at, next(self._counter), callback, interval=interval)
        with self._lock:
            heapq.heappush(self._heap, timer)
        return TimerHandle(timer)

    def fire_due(self, now: float) -> int:
        """Run every timer due at or before ``now``; returns the count fired."""
        fired = 0
        while True:
            with self._lock:
                if not self._heap or self._heap[0].due_at > now:
                    return fired
                timer = heapq.heappop(self._heap)
                if timer.cancelled:
                    continue
                if timer.interval is not None:
                    timer.due_at += timer.interval
                    timer.seq = next(self._counter)
                    heapq.heappush(self._heap, timer)
            timer.callback()
            fired += 1

    def next_due(self) -> float | None:
        with self._lock:
            live = [t for t in self._heap if not t.cancelled]
            return min((t.due_at for t in live), default=None)

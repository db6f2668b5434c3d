"""Deterministic discrete-event kernel.

Virtual time is a :class:`fractions.Fraction` of milliseconds so sums of
latencies and block boundaries compare exactly. Processes are generators that
yield :class:`Future` objects and are resumed with the future's value.
"""

from __future__ import annotations

import heapq
from fractions import Fraction
from typing import Any, Callable, Generator, Iterable

Time = Fraction

# priorities at equal time; lower runs first
NORMAL = 0
LEDGER = 10


def ms(value: Any) -> Fraction:
    """Exact virtual-time value from an int, float, str or Fraction.

    Floats go through ``str`` so ``0.4`` becomes exactly 2/5.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


class _Timeout:
    def __repr__(self) -> str:
        return "TIMEOUT"


TIMEOUT = _Timeout()


class EventQueue:
    """Events ordered by (time, priority, sequence number)."""

    def __init__(self) -> None:
        self._heap: list[tuple[Fraction, int, int, Callable, tuple]] = []
        self._seq = 0

    def push(self, at: Fraction, fn: Callable, args: tuple = (), priority: int = NORMAL) -> None:
        heapq.heappush(self._heap, (at, priority, self._seq, fn, args))
        self._seq += 1

    def pop(self):
        at, _prio, _seq, fn, args = heapq.heappop(self._heap)
        return at, fn, args

    def peek_time(self) -> Fraction | None:
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)


class Future:
    __slots__ = ("sim", "done", "value", "_callbacks")

    def __init__(self, sim: "Simulator"):
        self.sim = sim
        self.done = False
        self.value: Any = None
        self._callbacks: list[Callable[[Any], None]] = []

    def set(self, value: Any = None) -> None:
        if self.done:
            return
        self.done = True
        self.value = value
        for cb in self._callbacks:
            self.sim.call_soon(cb, value)
        self._callbacks.clear()

    def add_callback(self, cb: Callable[[Any], None]) -> None:
        if self.done:
            self.sim.call_soon(cb, self.value)
        else:
            self._callbacks.append(cb)


class Process(Future):
    __slots__ = ("gen", "name")

    def __init__(self, sim: "Simulator", gen: Generator, name: str = ""):
        super().__init__(sim)
        self.gen = gen
        self.name = name

    def _step(self, value: Any) -> None:
        try:
            waiting = self.gen.send(value)
        except StopIteration as stop:
            self.set(stop.value)
            return
        if not isinstance(waiting, Future):
            raise TypeError(f"process {self.name!r} yielded {waiting!r}, expected a Future")
        waiting.add_callback(self._step)


class Simulator:
    def __init__(self, start: Any = 0):
        self.now: Fraction = ms(start)
        self.queue = EventQueue()
        self.events_run = 0

    def schedule(self, at: Any, fn: Callable, *args: Any, priority: int = NORMAL) -> None:
        at = ms(at)
        if at < self.now:
            raise ValueError(f"cannot schedule in the past ({at} < {self.now})")
        self.queue.push(at, fn, args, priority)

    def call_soon(self, fn: Callable, *args: Any) -> None:
        self.queue.push(self.now, fn, args)

    def future(self) -> Future:
        return Future(self)

    def sleep(self, delay: Any) -> Future:
        fut = Future(self)
        self.schedule(self.now + ms(delay), fut.set, None)
        return fut

    def until(self, at: Any) -> Future:
        fut = Future(self)
        self.schedule(max(ms(at), self.now), fut.set, None)
        return fut

    def wait(self, fut: Future, deadline: Any | None) -> Future:
        """Resolve with ``fut``'s value, or ``TIMEOUT`` at ``deadline``."""
        out = Future(self)
        fut.add_callback(out.set)
        if deadline is not None:
            self.schedule(max(ms(deadline), self.now), out.set, TIMEOUT)
        return out

    def spawn(self, gen: Generator, name: str = "") -> Process:
        proc = Process(self, gen, name)
        self.call_soon(proc._step, None)
        return proc

    def all_of(self, futures: Iterable[Future]) -> Future:
        futures = list(futures)
        out = Future(self)
        remaining = [len(futures)]
        if not futures:
            out.set([])
            return out

        def _one(_value):
            remaining[0] -= 1
            if remaining[0] == 0:
                out.set([f.value for f in futures])

        for f in futures:
            f.add_callback(_one)
        return out

    def any_of(self, futures: Iterable[Future]) -> Future:
        """Resolve with the value of whichever future finishes first."""
        out = Future(self)
        for f in futures:
            f.add_callback(out.set)
        return out

    def run(self, until: Any | None = None) -> None:
        limit = None if until is None else ms(until)
        while self.queue:
            at = self.queue.peek_time()
            if limit is not None and at > limit:
                self.now = limit
                return
            at, fn, args = self.queue.pop()
            self.now = at
            self.events_run += 1
            fn(*args)
        if limit is not None:
            self.now = max(self.now, limit)

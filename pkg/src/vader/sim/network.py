"""Datacenter latency/bandwidth model, party placement and facilitator capacity."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Sequence

from .kernel import Future, Simulator, ms

DC_NAMES = ("London", "San Jose", "Milan", "Melbourne", "Dallas")

# one-way latency in ms between datacenters (symmetric)
DEFAULT_LATENCY_MS = (
    (0.4, 139, 21.8, 291, 110),
    (139, 0.4, 158, 161, 36.6),
    (21.8, 158, 0.4, 337, 129),
    (291, 161, 337, 0.4, 180),
    (110, 36.6, 129, 180, 0.4),
)

# Mbit/s between datacenters (symmetric)
DEFAULT_BANDWIDTH_MBPS = (
    (4413, 87.31, 460, 42.28, 112),
    (87.31, 4749, 78.68, 75.35, 305),
    (460, 78.68, 5113, 35.6, 92.91),
    (42.28, 75.35, 35.6, 4956, 65.5),
    (112, 305, 92.91, 65.5, 4260),
)


@dataclass(frozen=True)
class Network:
    names: tuple[str, ...]
    latency_ms: tuple[tuple[Fraction, ...], ...]
    bandwidth_bps: tuple[tuple[Fraction, ...], ...]

    @classmethod
    def build(cls, names: Sequence[str], latency_ms: Sequence[Sequence[Any]],
              bandwidth_bps: Sequence[Sequence[Any]]) -> "Network":
        n = len(names)
        lat = tuple(tuple(ms(v) for v in row) for row in latency_ms)
        bw = tuple(tuple(ms(v) for v in row) for row in bandwidth_bps)
        for label, m in (("latency_ms", lat), ("bandwidth_bps", bw)):
            if len(m) != n or any(len(row) != n for row in m):
                raise ValueError(f"{label} must be a {n}x{n} matrix")
        if any(v < 0 for row in lat for v in row):
            raise ValueError("latency_ms entries must be >= 0")
        if any(v <= 0 for row in bw for v in row):
            raise ValueError("bandwidth_bps entries must be > 0")
        return cls(tuple(names), lat, bw)

    @classmethod
    def default(cls) -> "Network":
        bw = [[ms(v) * 1_000_000 for v in row] for row in DEFAULT_BANDWIDTH_MBPS]
        return cls.build(DC_NAMES, DEFAULT_LATENCY_MS, bw)

    def __len__(self) -> int:
        return len(self.names)

    def latency(self, src: int, dst: int) -> Fraction:
        return self.latency_ms[src][dst]

    def bandwidth(self, src: int, dst: int) -> Fraction:
        return self.bandwidth_bps[src][dst]

    def rtt(self, src: int, dst: int) -> Fraction:
        return self.latency(src, dst) + self.latency(dst, src)

    def max_rtt(self) -> Fraction:
        n = len(self)
        return max(self.rtt(a, b) for a in range(n) for b in range(n))

    def transfer_time(self, nbytes: int, src: int, dst: int) -> Fraction:
        return transfer_time(nbytes, self.latency(src, dst), self.bandwidth(src, dst))


def transfer_time(nbytes: int, latency_ms: Any, bandwidth_bps: Any) -> Fraction:
    """Latency plus serialization delay, in ms."""
    return ms(latency_ms) + Fraction(nbytes * 8 * 1000) / ms(bandwidth_bps)


def place(count: int, n_dcs: int) -> list[int]:
    """Round-robin datacenter index for each of ``count`` parties."""
    return [i % n_dcs for i in range(count)]


def assign_facilitators(topology: str, buyer_dcs: Sequence[int], facilitator_dcs: Sequence[int],
                        net: Network, rng: random.Random) -> list[int]:
    """Pick a facilitator index for every buyer.

    ``cdn`` prefers facilitators in the buyer's datacenter (spreading buyers
    over them) and otherwise the lowest-latency one; ``random`` draws
    uniformly from the seeded generator.
    """
    if not facilitator_dcs:
        raise ValueError("no facilitators to assign")
    out = []
    if topology == "random":
        return [rng.randrange(len(facilitator_dcs)) for _ in buyer_dcs]
    if topology != "cdn":
        raise ValueError(f"unknown topology {topology!r}")
    seen: dict[int, int] = {}
    for dc in buyer_dcs:
        local = [j for j, fdc in enumerate(facilitator_dcs) if fdc == dc]
        if local:
            k = seen.get(dc, 0)
            seen[dc] = k + 1
            out.append(local[k % len(local)])
        else:
            out.append(min(range(len(facilitator_dcs)),
                           key=lambda j: (net.latency(dc, facilitator_dcs[j]), j)))
    return out


class Capacity:
    """FIFO service slots; ``slots=None`` means unlimited."""

    def __init__(self, sim: Simulator, slots: int | None = None):
        if slots is not None and slots < 1:
            raise ValueError("capacity must be at least 1")
        self.sim = sim
        self.slots = slots
        self.busy = 0
        self._queue: deque[Future] = deque()
        self.max_queue = 0

    def acquire(self) -> Future:
        fut = self.sim.future()
        if self.slots is None or self.busy < self.slots:
            self.busy += 1
            fut.set(None)
        else:
            self._queue.append(fut)
            self.max_queue = max(self.max_queue, len(self._queue))
        return fut

    def release(self) -> None:
        if self._queue:
            self._queue.popleft().set(None)
        else:
            self.busy -= 1

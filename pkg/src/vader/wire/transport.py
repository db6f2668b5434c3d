"""Off-chain channel transport between two parties.

Each side owns an :class:`Endpoint`. ``send`` schedules delivery on the peer
after the link latency (control messages) or latency plus serialization time
(bulk transfers). Delivery is FIFO per direction. ``recv`` resolves with the
next message, ``TIMEOUT`` at the deadline, or ``CLOSED``.
"""

from __future__ import annotations

import json
import random
from collections import deque
from fractions import Fraction
from typing import Any

from ..sim.kernel import TIMEOUT, Future, Simulator, ms
from .codec import Message, decode, encode
from .messages import CHANNEL_SLOTS, ReqId


class _Closed:
    def __repr__(self) -> str:
        return "CLOSED"


CLOSED = _Closed()


def serialization_ms(nbytes: int, bandwidth_bps: Any) -> Fraction:
    return Fraction(nbytes * 8 * 1000) / ms(bandwidth_bps)


class Endpoint:
    def __init__(self, sim: Simulator, cid: bytes, owner: str, latency: Any, bandwidth_bps: Any,
                 rng: random.Random | None = None):
        self.sim = sim
        self.cid = cid
        self.owner = owner
        self.latency = ms(latency)
        self.bandwidth_bps = ms(bandwidth_bps)
        self.peer: Endpoint | None = None
        self.closed = False
        self.close_reason: str | None = None
        self._inbox: deque[bytes] = deque()
        self._waiter: Future | None = None
        self._last_delivery = ms(0)
        self._store: dict[tuple[str, str], bytes] = {}
        self._order: list[tuple[str, str]] = []
        self._rng = rng or random.Random(0)
        self._next_counter = 1
        self._last_accepted = 0
        self._seen: set[ReqId] = set()
        self.bytes_sent = 0

    # -- sending --------------------------------------------------------
    def send(self, msg: Message, *, bulk_bytes: int | None = None) -> Fraction:
        """Send ``msg`` to the peer; returns its arrival time.

        ``bulk_bytes`` marks a bulk transfer and gives the byte count used for
        timing (the payload may be a scaled stand-in for the modelled file).
        """
        if self.closed:
            raise ChannelClosed(self.close_reason or "closed")
        raw = encode(msg)
        delay = self.latency
        if bulk_bytes is not None:
            delay += serialization_ms(bulk_bytes, self.bandwidth_bps)
        arrival = max(self.sim.now + delay, self._last_delivery)
        self._last_delivery = arrival
        self.bytes_sent += len(raw) if bulk_bytes is None else bulk_bytes
        self.sim.schedule(arrival, self.peer._deliver, raw)
        return arrival

    def _deliver(self, raw: bytes) -> None:
        if self.closed:
            return
        msg = decode(raw)
        if msg.TAG == 0x23:  # Close
            self._mark_closed(msg.reason.decode("utf-8", "replace"))
            return
        if self._waiter is not None and not self._waiter.done:
            waiter, self._waiter = self._waiter, None
            waiter.set(msg)
        else:
            self._inbox.append(raw)

    # -- receiving ------------------------------------------------------
    def recv(self, deadline: Any | None = None) -> Future:
        out = self.sim.future()
        if self._inbox:
            out.set(decode(self._inbox.popleft()))
            return out
        if self.closed:
            out.set(CLOSED)
            return out
        self._waiter = out
        if deadline is not None:
            self.sim.schedule(max(ms(deadline), self.sim.now), self._expire, out)
        return out

    def _expire(self, fut: Future) -> None:
        if not fut.done:
            if self._waiter is fut:
                self._waiter = None
            fut.set(TIMEOUT)

    # -- closing --------------------------------------------------------
    def close(self, reason: str = "") -> None:
        if self.closed:
            return
        from .messages import Close

        if self.peer is not None and not self.peer.closed:
            raw = encode(Close(self.cid, reason.encode("utf-8")))
            arrival = max(self.sim.now + self.latency, self._last_delivery)
            self.sim.schedule(arrival, self.peer._deliver, raw)
        self._mark_closed(reason)

    def _mark_closed(self, reason: str) -> None:
        self.closed = True
        self.close_reason = reason
        if self._waiter is not None and not self._waiter.done:
            waiter, self._waiter = self._waiter, None
            waiter.set(CLOSED)

    # -- local durable store -------------------------------------------
    def store(self, reqid: ReqId, *msgs: Message) -> None:
        for msg in msgs:
            key = (reqid.hex(), type(msg).__name__)
            if key not in self._store:
                self._order.append(key)
            self._store[key] = encode(msg)

    def load(self, reqid: ReqId, slot: type[Message]) -> Message | None:
        raw = self._store.get((reqid.hex(), slot.__name__))
        return None if raw is None else decode(raw, slot)

    def load_raw(self, reqid: ReqId, slot: type[Message]) -> bytes | None:
        return self._store.get((reqid.hex(), slot.__name__))

    def stored_reqids(self) -> list[str]:
        seen: list[str] = []
        for rid, _slot in self._order:
            if rid not in seen:
                seen.append(rid)
        return seen

    def log(self) -> list[tuple[str, str, bytes]]:
        return [(rid, slot, self._store[(rid, slot)]) for rid, slot in self._order]

    def export_jsonl(self) -> str:
        lines = []
        for rid, slot, raw in self.log():
            lines.append(json.dumps({"cid": self.cid.hex(), "reqid": rid, "slot": slot, "hex": raw.hex()},
                                    sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    # -- request ids ----------------------------------------------------
    def next_reqid(self) -> ReqId:
        rid = ReqId(self._next_counter, self._rng.getrandbits(64))
        self._next_counter += 1
        return rid

    def check_reqid(self, reqid: ReqId) -> bool:
        """Accept iff the counter is fresh and strictly increasing."""
        if reqid in self._seen or reqid.counter <= self._last_accepted:
            return False
        self._seen.add(reqid)
        self._last_accepted = reqid.counter
        return True


class ChannelClosed(Exception):
    pass


def connect(sim: Simulator, cid: bytes, a: str, b: str, latency: Any, bandwidth_bps: Any,
            rng: random.Random | None = None) -> tuple[Endpoint, Endpoint]:
    rng = rng or random.Random(0)
    ea = Endpoint(sim, cid, a, latency, bandwidth_bps, random.Random(rng.getrandbits(64)))
    eb = Endpoint(sim, cid, b, latency, bandwidth_bps, random.Random(rng.getrandbits(64)))
    ea.peer, eb.peer = eb, ea
    return ea, eb


def slots_complete(endpoint: Endpoint, reqid: ReqId) -> bool:
    return all(endpoint.load_raw(reqid, slot) is not None for slot in CHANNEL_SLOTS)

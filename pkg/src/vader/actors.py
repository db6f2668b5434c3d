"""Owner, facilitator and buyer state machines.

Facilitators run one service process per open channel and react to ledger
commits through watchers. Buyers expose one generator per exchange; the
session drivers in :mod:`vader.protocols` decide when channels open and
close. Every wait a buyer makes goes through a :class:`Stopwatch`, which is
what splits end-to-end time into protocol, transfer and verify shares.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Generator

from . import crypto
from .contracts import Bundle, deposit_sig, facilitator_sign, owner_sign
from .ledger import Ledger, LedgerTx, TxReceipt
from .sim.kernel import TIMEOUT, Future, Simulator, ms
from .sim.network import Capacity
from .wire import (CLOSED, IOU, M0, M1, M2, M3, M4, M5, AckBody, ChannelClosed, DepositGrant,
                   EncryptedContent, Endpoint, KeyRelease, PlainContent, Registration, ReqId,
                   Retransmission, RetransmitRequest, TradeTerms, chunk_ad, decode, encode)

HONEST = "honest"
WRONG_CHUNK = "wrong_chunk"
WITHHOLD_KEY = "withhold_key"
COLLUDER = "colluder"  # facilitator side and silent buyer side
FALSE_DISPUTE = "false_dispute"
DEFECTING = "defecting"


@dataclass(frozen=True)
class Strategy:
    """``rounds`` limits misbehaviour to those 1-based exchange ordinals per buyer."""

    kind: str = HONEST
    indices: tuple[int, ...] = (0,)
    rounds: tuple[int, ...] | None = None

    @property
    def honest(self) -> bool:
        return self.kind == HONEST

    def active(self, ordinal: int) -> bool:
        return self.rounds is None or ordinal in self.rounds


@dataclass(frozen=True)
class ActorParams:
    """Knobs the actors need from the scenario."""

    tau: int = 10
    retry_cap: int = 3
    step_timeout: Fraction = Fraction(60_000)
    file_size: int = 20 * 1024 * 1024
    n_chunks: int = 40
    corruption_rate: float = 0.0
    crypto_ms_per_byte: Fraction = Fraction(0)
    collusion: str = "off"
    collusion_price: int = 1_000

    @property
    def cipher_bytes(self) -> int:
        return self.file_size + crypto.TAG_SIZE * self.n_chunks

    def chunk_bytes(self, count: int) -> int:
        per = -(-self.file_size // self.n_chunks) + crypto.TAG_SIZE
        return per * count


class Trace:
    """Decision log shared by all actors of a run; exported as JSON Lines."""

    def __init__(self, sim: Simulator, enabled: bool = True):
        self.sim = sim
        self.enabled = enabled
        self.events: list[dict[str, Any]] = []

    def __call__(self, actor: str, event: str, **detail: Any) -> None:
        if self.enabled:
            self.events.append({"t": str(self.sim.now), "actor": actor, "event": event, **detail})

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, default=_jsonable) + "\n" for e in self.events)


def _jsonable(v: Any) -> Any:
    if isinstance(v, bytes):
        return v.hex()
    if isinstance(v, Fraction):
        return str(v)
    return repr(v)


@dataclass
class World:
    sim: Simulator
    ledger: Ledger
    params: ActorParams
    trace: Trace


# -- content -----------------------------------------------------------------------


@dataclass(frozen=True)
class Content:
    chunks: tuple[bytes, ...]

    @property
    def id_c(self) -> tuple[bytes, ...]:
        return tuple(crypto.hash(c) for c in self.chunks)

    @property
    def vid(self) -> bytes:
        return crypto.content_id(list(self.id_c))


def make_content(seed: int, lengths: list[int]) -> Content:
    chunks = []
    for j, n in enumerate(lengths):
        block = b""
        counter = 0
        while len(block) < n:
            block += crypto.hash(b"content" + seed.to_bytes(8, "big") + j.to_bytes(8, "big")
                                 + counter.to_bytes(8, "big"))
            counter += 1
        chunks.append(block[:n])
    return Content(tuple(chunks))


def garbage_like(chunk: bytes, tag: bytes) -> bytes:
    """Bytes of the same length as ``chunk`` that differ from it."""
    out = b""
    counter = 0
    while len(out) < len(chunk):
        out += crypto.hash(b"garbage" + tag + counter.to_bytes(4, "big"))
        counter += 1
    out = out[: len(chunk)]
    if out == chunk:
        out = bytes([out[0] ^ 0xFF]) + out[1:]
    return out


# -- session bookkeeping --------------------------------------------------------------


class SessionLog:
    """Records every party transaction of one buyer session."""

    def __init__(self, world: World, protocol: str, buyer: "Buyer", facilitator: "Facilitator"):
        self.world = world
        self.protocol = protocol
        self.buyer = buyer
        self.facilitator = facilitator
        self.commits: list[dict[str, Any]] = []
        self.current_file: int | None = None
        self.cids: list[bytes] = []

    def submit(self, tx: LedgerTx, role: str) -> Future:
        fut = self.world.ledger.submit_tx(tx)
        entry = {"op": tx.op, "contract": tx.contract, "role": role, "file_index": self.current_file,
                 "submit_time": tx.submit_time}
        self.commits.append(entry)

        def done(r: TxReceipt) -> None:
            entry.update(commit_time=r.commit_time, height=r.height, ok=r.ok, error=r.error)

        fut.add_callback(done)
        return fut


class Stopwatch:
    """Accumulates one file's elapsed time by phase."""

    PHASES = ("protocol", "transfer", "verify")

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.start = sim.now
        self.parts = {p: Fraction(0) for p in self.PHASES}
        self.chain = Fraction(0)

    def wait(self, fut: Future, phase: str, *, chain: bool = False,
             latency_share: Fraction = Fraction(0)) -> Generator[Future, Any, Any]:
        t0 = self.sim.now
        value = yield fut
        dt = self.sim.now - t0
        head = min(dt, latency_share)
        self.parts["protocol"] += head
        self.parts[phase] += dt - head
        if chain:
            self.chain += dt
        return value

    def sleep(self, delay: Fraction, phase: str) -> Generator[Future, Any, None]:
        if delay > 0:
            yield from self.wait(self.sim.sleep(delay), phase)

    @property
    def e2e(self) -> Fraction:
        return self.sim.now - self.start


@dataclass
class Attempt:
    """Result of one buyer exchange attempt."""

    status: str  # ok | dispute | failed
    reqid: ReqId | None = None
    reason: str = ""
    index: int = 0
    chunk: bytes = b""
    m5: M5 | None = None
    retransmits: int = 0
    iou_sent: bool = False


# -- owner ---------------------------------------------------------------------------


class Owner:
    def __init__(self, world: World, name: str, keypair: crypto.KeyPair):
        self.world = world
        self.name = name
        self.keypair = keypair
        self.catalog: dict[bytes, tuple[Content, int]] = {}

    @property
    def pk(self) -> bytes:
        return self.keypair.pk

    def upload(self, content: Content, amt_o: int, facilitator: "Facilitator", price: int,
               id_c: tuple[bytes, ...] | None = None) -> Future | None:
        """Hand content and the signed terms to a facilitator, which registers it on chain.

        ``id_c`` lets tests send stale hashes; the facilitator then refuses.
        """
        m = Registration(id_c if id_c is not None else content.id_c, amt_o, self.pk, facilitator.pk)
        sig_o = owner_sign(m, self.keypair)
        fut = facilitator.receive_upload(self, content, m, sig_o, price)
        if fut is not None:
            self.catalog[content.vid] = (content, amt_o)
        return fut


# -- facilitator -------------------------------------------------------------------------


@dataclass
class Hosted:
    content: Content
    price: int
    owner_pk: bytes
    amt_o: int


@dataclass
class FExchange:
    """Facilitator-side state of one exchange."""

    terms: TradeTerms
    m1: M1
    k: bytes | None = None
    ciphertexts: tuple[bytes, ...] = ()
    id_e: tuple[bytes, ...] = ()
    m3: M3 | None = None
    m4: M4 | None = None
    m5: M5 | None = None
    agreed_on_chain: bool = False
    cheat: bool = False


class Facilitator:
    def __init__(self, world: World, name: str, keypair: crypto.KeyPair, dc: int,
                 strategy: Strategy = Strategy(), capacity: Capacity | None = None, seed: int = 0):
        self.world = world
        self.name = name
        self.keypair = keypair
        self.dc = dc
        self.strategy = strategy
        self.capacity = capacity or Capacity(world.sim)
        self.rng = random.Random(seed)
        self.hosted: dict[bytes, Hosted] = {}
        self.sybil_vid: bytes | None = None
        self.channels: dict[bytes, tuple[Endpoint, SessionLog, str]] = {}
        self.exchanges: dict[tuple[bytes, str], FExchange] = {}
        self.served: dict[bytes, int] = {}
        world.ledger.watch("channel", "channel_close", self._on_close)
        world.ledger.watch("dispute", "raise_dispute", self._on_dispute)

    @property
    def pk(self) -> bytes:
        return self.keypair.pk

    def _trace(self, event: str, **detail: Any) -> None:
        self.world.trace(self.name, event, **detail)

    # -- registration ------------------------------------------------------------
    def receive_upload(self, owner: Owner, content: Content, m: Registration, sig_o: bytes,
                       price: int) -> Future | None:
        if (tuple(crypto.hash(c) for c in content.chunks) != m.id_c
                or not crypto.verify(owner.pk, encode(m), sig_o) or m.facilitator_pk != self.pk):
            self._trace("upload_rejected", owner=owner.name)
            return None
        sig_f = facilitator_sign(m, sig_o, self.keypair)
        tx = LedgerTx.call(self.pk, "registry", "register_content", m=encode(m), sig_o=sig_o, sig_f=sig_f)
        fut = self.world.ledger.submit_tx(tx)

        def done(r: TxReceipt) -> None:
            if r.ok:
                self.hosted[r.result] = Hosted(content, price, m.owner_pk, m.amt_o)
                self._trace("registered", vid=r.result)

        fut.add_callback(done)
        return fut

    def host_offchain(self, owner: Owner, content: Content, amt_o: int, price: int) -> bytes:
        """Ledger-free hosting for the baseline that never touches the chain."""
        self.hosted[content.vid] = Hosted(content, price, owner.pk, amt_o)
        owner.catalog[content.vid] = (content, amt_o)
        return content.vid

    def deposit_authorization(self, amount: int) -> bytes:
        return deposit_sig(self.keypair, amount)

    # -- channel service -------------------------------------------------------------
    def accept(self, ep: Endpoint, log: SessionLog, mode: str) -> None:
        self.channels[ep.cid] = (ep, log, mode)
        self.world.sim.spawn(self._serve(ep, log, mode), f"{self.name}/{ep.cid.hex()[:8]}")

    def _serve(self, ep: Endpoint, log: SessionLog, mode: str):
        pending: dict[str, FExchange] = {}
        while True:
            msg = yield ep.recv()
            if msg is CLOSED:
                self._trace("channel_closed", cid=ep.cid, reason=ep.close_reason)
                return
            try:
                if isinstance(msg, M0):
                    if mode == "vanilla":
                        yield from self._serve_plain(ep, msg, log.buyer.pk)
                        continue
                    ok = yield from self._on_m0(ep, log, msg, pending, mode)
                elif isinstance(msg, DepositGrant) and mode == "bme":
                    ok = yield from self._on_grant(ep, log, msg, pending)
                elif isinstance(msg, RetransmitRequest):
                    ok = yield from self._retransmit(ep, msg, pending)
                elif isinstance(msg, M2):
                    ok = self._on_m2(ep, log, msg, pending, mode)
                elif isinstance(msg, M4) and mode == "vader":
                    ok = self._on_m4(ep, log, msg, pending)
                else:
                    ok = self._abort(ep, log, mode, f"unexpected {type(msg).__name__}")
            except ChannelClosed:
                return
            if not ok:
                return

    def _abort(self, ep: Endpoint, log: SessionLog, mode: str, reason: str) -> bool:
        self._trace("abort", cid=ep.cid, reason=reason)
        ep.close(reason)
        if mode == "vader":
            bundles = [b.to_arg() for b in self.bundles(ep)]
            log.submit(LedgerTx.call(self.pk, "channel", "channel_close", cid=ep.cid, bundles=bundles),
                       "facilitator")
        return False

    def _on_m0(self, ep: Endpoint, log: SessionLog, m0: M0, pending: dict[str, FExchange], mode: str):
        terms = m0.terms
        buyer_pk = log.buyer.pk
        if terms.cid != ep.cid or not m0.valid(buyer_pk):
            return self._abort(ep, log, mode, "request signature invalid")
        if not ep.check_reqid(terms.reqid):
            if self.strategy.kind == COLLUDER and self._cosign_rewrite(ep, m0):
                return True
            return self._abort(ep, log, mode, "reqid is prev. known")
        hosted = self.hosted.get(terms.vid)
        if hosted is None or terms.price != hosted.price:
            return self._abort(ep, log, mode, "price_idC != cost_idC")
        m1 = M1.countersign(m0, self.keypair)
        ep.store(terms.reqid, m0, m1)
        ep.send(m1)
        ordinal = self.served[buyer_pk] = self.served.get(buyer_pk, 0) + 1
        x = FExchange(terms, m1, cheat=self.strategy.kind in (WRONG_CHUNK, WITHHOLD_KEY)
                      and self.strategy.active(ordinal))
        pending[terms.reqid.hex()] = x
        self.exchanges[(ep.cid, terms.reqid.hex())] = x
        self._trace("agreed", cid=ep.cid, reqid=terms.reqid.hex(), price=terms.price)
        if mode == "vader":
            yield from self._send_content(ep, x, hosted)
        return True

    def _cosign_rewrite(self, ep: Endpoint, m0: M0) -> bool:
        """Colluding facilitator signs a second agreement reusing a settled reqid."""
        x = self.exchanges.get((ep.cid, m0.terms.reqid.hex()))
        if x is None or x.m4 is None or m0.terms.vid != self.sybil_vid:
            return False
        m1_alt = M1.countersign(m0, self.keypair)
        ep.send(m1_alt)
        self._trace("collusion_cosigned", cid=ep.cid, reqid=m0.terms.reqid.hex(), price=m0.terms.price)
        return True

    def _on_grant(self, ep: Endpoint, log: SessionLog, g: DepositGrant, pending: dict[str, FExchange]):
        x = pending.get(g.reqid.hex())
        if x is None or x.agreed_on_chain or g.amount != x.terms.price or g.cid != ep.cid:
            return self._abort(ep, log, "bme", "deposit grant does not match the agreement")
        tx = LedgerTx.call(self.pk, "bme", "agree", m1=encode(x.m1), buyer_pk=log.buyer.pk,
                           facilitator_pk=self.pk, deposit_sig=g.sig_b)
        receipt = yield log.submit(tx, "facilitator")
        if not receipt.ok:
            return self._abort(ep, log, "bme", f"agreement commit failed: {receipt.error}")
        x.agreed_on_chain = True
        yield from self._send_content(ep, x, self.hosted[x.terms.vid])
        return True

    def _plaintext(self, hosted: Hosted, rid: ReqId, cheat: bool) -> list[bytes]:
        chunks = list(hosted.content.chunks)
        if cheat and self.strategy.kind == WRONG_CHUNK:
            for i in self.strategy.indices:
                if i < len(chunks):
                    chunks[i] = garbage_like(chunks[i], rid.hex().encode() + bytes([i % 256]))
        return chunks

    def _in_transit(self, chunks: list[bytes] | tuple[bytes, ...]) -> tuple[bytes, ...]:
        rate = self.world.params.corruption_rate
        if rate <= 0:
            return tuple(chunks)
        out = []
        for c in chunks:
            if c and self.rng.random() < rate:
                c = bytes([c[0] ^ 0xFF]) + c[1:]
            out.append(c)
        return tuple(out)

    def _send_content(self, ep: Endpoint, x: FExchange, hosted: Hosted):
        rid = x.terms.reqid
        x.k = crypto.sym_gen(self.rng.getrandbits(63))
        plain = self._plaintext(hosted, rid, x.cheat)
        x.ciphertexts = tuple(crypto.enc(x.k, p, chunk_ad(ep.cid, rid, j)) for j, p in enumerate(plain))
        x.id_e = tuple(crypto.hash(c) for c in x.ciphertexts)
        yield self.capacity.acquire()
        try:
            arrival = ep.send(EncryptedContent(ep.cid, rid, self._in_transit(x.ciphertexts), x.id_e),
                              bulk_bytes=self.world.params.cipher_bytes)
            yield self.world.sim.until(arrival)
        finally:
            self.capacity.release()

    def _serve_plain(self, ep: Endpoint, m0: M0, buyer_pk: bytes):
        hosted = self.hosted.get(m0.terms.vid)
        if hosted is None:
            ep.close("unknown content")
            return
        ordinal = self.served[buyer_pk] = self.served.get(buyer_pk, 0) + 1
        cheat = self.strategy.kind == WRONG_CHUNK and self.strategy.active(ordinal)
        chunks = self._in_transit(self._plaintext(hosted, m0.terms.reqid, cheat))
        yield self.capacity.acquire()
        try:
            arrival = ep.send(PlainContent(ep.cid, m0.terms.reqid, chunks),
                              bulk_bytes=self.world.params.file_size)
            yield self.world.sim.until(arrival)
        finally:
            self.capacity.release()

    def _retransmit(self, ep: Endpoint, req: RetransmitRequest, pending: dict[str, FExchange]):
        x = pending.get(req.reqid.hex())
        if x is None or any(i >= len(x.ciphertexts) for i in req.indices):
            self._trace("bad_retransmit_request", cid=ep.cid)
            return True
        chunks = self._in_transit([x.ciphertexts[i] for i in req.indices])
        yield self.capacity.acquire()
        try:
            arrival = ep.send(Retransmission(ep.cid, req.reqid, req.indices, chunks),
                              bulk_bytes=self.world.params.chunk_bytes(len(req.indices)))
            yield self.world.sim.until(arrival)
        finally:
            self.capacity.release()
        return True

    def _on_m2(self, ep: Endpoint, log: SessionLog, m2: M2, pending: dict[str, FExchange], mode: str) -> bool:
        x = pending.get(m2.body.reqid.hex())
        if (x is None or m2.body.cid != ep.cid or m2.body.id_e != x.id_e
                or not m2.valid(log.buyer.pk)):
            return self._abort(ep, log, mode, "acknowledgement invalid")
        m3 = M3.countersign(m2, self.keypair)
        ep.store(x.terms.reqid, m2, m3)
        x.m3 = m3
        ep.send(m3)
        if mode == "bme":
            self.world.sim.spawn(self._bme_key(ep, log, x), f"{self.name}/key")
        return True

    def _on_m4(self, ep: Endpoint, log: SessionLog, m4: M4, pending: dict[str, FExchange]) -> bool:
        iou = m4.iou
        x = pending.get(iou.reqid.hex())
        if x is None or x.m3 is None or not m4.valid(log.buyer.pk) or (
                iou.from_pk, iou.to_pk, iou.amount, iou.cid) != (log.buyer.pk, self.pk, x.terms.price, ep.cid):
            return self._abort(ep, log, "vader", "IOU.price_idC != price_idC")
        ep.store(x.terms.reqid, m4)
        x.m4 = m4
        if x.cheat and self.strategy.kind == WITHHOLD_KEY:
            self._trace("key_withheld", cid=ep.cid, reqid=iou.reqid.hex())
            return True
        x.m5 = M5.create(KeyRelease(ep.cid, x.terms.reqid, x.k), self.keypair)
        ep.store(x.terms.reqid, x.m5)
        ep.send(x.m5)
        return True

    def _bme_key(self, ep: Endpoint, log: SessionLog, x: FExchange):
        rid = x.terms.reqid.hex()
        receipt = yield self.world.ledger.wait_for(
            "bme", "ack", lambda r: r.ok and r.tx.args()["cid"] == ep.cid and r.tx.args()["reqid"] == rid)
        args = receipt.tx.args()
        x.m4 = decode(args["m4"], M4)
        ep.store(x.terms.reqid, x.m4)
        if x.cheat and self.strategy.kind == WITHHOLD_KEY:
            self._trace("key_withheld", cid=ep.cid, reqid=rid)
            return
        x.m5 = M5.create(KeyRelease(ep.cid, x.terms.reqid, x.k), self.keypair)
        ep.store(x.terms.reqid, x.m5)
        log.submit(LedgerTx.call(self.pk, "bme", "release_key", cid=ep.cid, reqid=rid, m5=encode(x.m5)),
                   "facilitator")

    # -- chain reactions -------------------------------------------------------------
    def bundles(self, ep: Endpoint) -> list[Bundle]:
        out = []
        for rid_hex in ep.stored_reqids():
            x = self.exchanges.get((ep.cid, rid_hex))
            if x is None or x.m3 is None or x.m4 is None:
                continue
            out.append(Bundle(x.m1, x.m3, x.m4, x.m5))
        return out

    def _on_close(self, receipt: TxReceipt) -> None:
        if not receipt.ok or receipt.tx.submitter == self.pk:
            return
        cid = receipt.result["cid"]
        entry = self.channels.get(cid)
        if entry is None:
            return
        ep, log, _mode = entry
        state = self.world.ledger.read_state("channel", cid)
        queued = {q["reqid"] for q in state["queued"]}
        missing = [b for b in self.bundles(ep) if b.m1.terms.reqid.hex() not in queued]
        if missing:
            self._trace("counter_close", cid=cid, bundles=len(missing))
            log.submit(LedgerTx.call(self.pk, "channel", "channel_close", cid=cid,
                                     bundles=[b.to_arg() for b in missing]), "facilitator")

    def _on_dispute(self, receipt: TxReceipt) -> None:
        if not receipt.ok or receipt.result["status"] != "AwaitingKey":
            return
        args = receipt.tx.args()
        if args["facilitator_pk"] != self.pk:
            return
        terms = decode(args["m1"], M1).terms
        x = self.exchanges.get((terms.cid, terms.reqid.hex()))
        entry = self.channels.get(terms.cid)
        if x is None or x.m5 is None or entry is None or x.cheat:
            return
        _ep, log, _mode = entry
        self._trace("submit_key", dispute_id=receipt.result["dispute_id"])
        log.submit(LedgerTx.call(self.pk, "dispute", "submit_key", dispute_id=receipt.result["dispute_id"],
                                 m5=encode(x.m5)), "facilitator")


# -- buyer -------------------------------------------------------------------------------


@dataclass
class FileJob:
    index: int
    vid: bytes
    price: int
    id_c: tuple[bytes, ...]


@dataclass
class Rewrite:
    """A colluding pair's substitute agreement for an exchange already done."""

    m1: M1
    m1_alt: M1
    m4_alt: M4


class Buyer:
    def __init__(self, world: World, name: str, keypair: crypto.KeyPair, dc: int,
                 strategy: Strategy = Strategy(), seed: int = 0):
        self.world = world
        self.name = name
        self.keypair = keypair
        self.dc = dc
        self.strategy = strategy
        self.rng = random.Random(seed)
        self.library: dict[bytes, tuple[bytes, ...]] = {}
        self.rewrites: dict[tuple[bytes, str], Rewrite] = {}

    @property
    def pk(self) -> bytes:
        return self.keypair.pk

    def _trace(self, event: str, **detail: Any) -> None:
        self.world.trace(self.name, event, **detail)

    def _recv(self, ep: Endpoint):
        return ep.recv(self.world.sim.now + self.world.params.step_timeout)

    def _chain_deadline(self) -> Fraction:
        # room for the step timeout plus two block boundaries
        return (self.world.sim.now + self.world.params.step_timeout
                + 2 * self.world.ledger.config.block_interval)

    @staticmethod
    def _send(ep: Endpoint, msg) -> bool:
        try:
            ep.send(msg)
            return True
        except ChannelClosed:
            return False

    # -- shared steps ---------------------------------------------------------------
    def _receive_content(self, ep: Endpoint, sw: Stopwatch, rid: ReqId, att: Attempt):
        """Collect <E, id_E>, retransmitting chunks whose hash does not match."""
        msg = yield from sw.wait(self._recv(ep), "transfer")
        n = self.world.params.n_chunks
        if not isinstance(msg, EncryptedContent) or (msg.cid, msg.reqid) != (ep.cid, rid) or not (
                len(msg.chunks) == len(msg.id_e) == n):
            att.status, att.reason = "failed", "encrypted content not received"
            return None
        chunks, id_e = list(msg.chunks), msg.id_e
        bad = [j for j in range(n) if crypto.hash(chunks[j]) != id_e[j]]
        while bad:
            if att.retransmits >= self.world.params.retry_cap:
                att.status, att.reason = "failed", "Matching chunk & hash is not received"
                ep.close(att.reason)
                return None
            att.retransmits += 1
            if not self._send(ep, RetransmitRequest(ep.cid, rid, tuple(bad))):
                att.status, att.reason = "failed", "channel closed"
                return None
            msg = yield from sw.wait(self._recv(ep), "transfer")
            if not isinstance(msg, Retransmission) or msg.reqid != rid or len(msg.chunks) != len(msg.indices):
                att.status, att.reason = "failed", "retransmission not received"
                return None
            for i, c in zip(msg.indices, msg.chunks):
                if i < n:
                    chunks[i] = c
            bad = [j for j in range(n) if crypto.hash(chunks[j]) != id_e[j]]
        return chunks, id_e

    def _decrypt_and_verify(self, job: FileJob, ep: Endpoint, rid: ReqId, chunks: list[bytes], k: bytes,
                            att: Attempt) -> tuple[bytes, ...] | None:
        plain = []
        for j, c in enumerate(chunks):
            try:
                p = crypto.dec(k, c, chunk_ad(ep.cid, rid, j))
            except crypto.DecryptionError:
                att.status, att.index, att.chunk = "dispute", j, b""
                return None
            if crypto.hash(p) != job.id_c[j]:
                att.status, att.index, att.chunk = "dispute", j, p
                return None
            plain.append(p)
        return tuple(plain)

    def _accept(self, job: FileJob, plain: tuple[bytes, ...], att: Attempt) -> None:
        self.library[job.vid] = plain
        if self.strategy.kind == FALSE_DISPUTE:
            # claim chunk 0 is wrong while presenting the genuine plaintext
            att.status, att.index, att.chunk = "dispute", 0, plain[0]
            self._trace("false_dispute", vid=job.vid)
        else:
            att.status = "ok"

    def _verify_cost(self, sw: Stopwatch):
        yield from sw.sleep(self.world.params.crypto_ms_per_byte * self.world.params.file_size, "verify")

    # -- state-channel exchange ---------------------------------------------------------
    def vader_exchange(self, ep: Endpoint, f_pk: bytes, job: FileJob, sw: Stopwatch):
        rid = ep.next_reqid()
        att = Attempt("failed", rid)
        terms = TradeTerms(ep.cid, rid, job.vid, job.price)
        m0 = M0.create(terms, self.keypair)
        ep.store(rid, m0)
        if not self._send(ep, m0):
            att.reason = "channel closed"
            return att
        m1 = yield from sw.wait(self._recv(ep), "protocol")
        if not isinstance(m1, M1) or m1.terms != terms or not m1.valid(self.pk, f_pk):
            att.reason = "no agreement"
            return att
        ep.store(rid, m1)

        got = yield from self._receive_content(ep, sw, rid, att)
        if got is None:
            return att
        chunks, id_e = got
        m2 = M2.create(AckBody(ep.cid, rid, id_e), self.keypair)
        ep.store(rid, m2)
        if not self._send(ep, m2):
            att.reason = "channel closed"
            return att
        m3 = yield from sw.wait(self._recv(ep), "protocol")
        if not isinstance(m3, M3) or m3.body != m2.body or not m3.valid(self.pk, f_pk):
            att.reason = "acknowledgement not countersigned"
            return att
        ep.store(rid, m3)

        m4 = M4.create(IOU(self.pk, f_pk, job.price, ep.cid, rid), self.keypair)
        ep.store(rid, m4)
        if not self._send(ep, m4):
            att.reason = "channel closed"
            return att
        att.iou_sent = True
        m5 = yield from sw.wait(self._recv(ep), "protocol")
        if not isinstance(m5, M5) or not m5.valid(f_pk) or (m5.release.cid, m5.release.reqid) != (ep.cid, rid):
            self._trace("key_missing", cid=ep.cid, reqid=rid.hex())
            att.status, att.index, att.chunk = "dispute", 0, b""
            return att
        ep.store(rid, m5)
        att.m5 = m5
        yield from self._verify_cost(sw)
        plain = self._decrypt_and_verify(job, ep, rid, chunks, m5.release.k, att)
        if plain is not None:
            self._accept(job, plain, att)
        if att.status == "dispute" and att.chunk == b"" and plain is None:
            self._trace("undecryptable", cid=ep.cid, reqid=rid.hex())
        return att

    def propose_rewrite(self, ep: Endpoint, f_pk: bytes, rid: ReqId, sybil_vid: bytes, sw: Stopwatch):
        """Ask the facilitator to co-sign a cheaper agreement under an already used reqid."""
        m1 = ep.load(rid, M1)
        terms = TradeTerms(ep.cid, rid, sybil_vid, self.world.params.collusion_price)
        m0_alt = M0.create(terms, self.keypair)
        if m1 is None or not self._send(ep, m0_alt):
            return None
        reply = yield from sw.wait(self._recv(ep), "protocol")
        if not isinstance(reply, M1) or reply.terms != terms or not reply.valid(self.pk, f_pk):
            self._trace("collusion_refused", cid=ep.cid)
            return None
        m4_alt = M4.create(IOU(self.pk, f_pk, terms.price, ep.cid, rid), self.keypair)
        rw = Rewrite(m1, reply, m4_alt)
        self.rewrites[(ep.cid, rid.hex())] = rw
        self._trace("collusion_agreed", cid=ep.cid, reqid=rid.hex(), price=terms.price)
        return rw

    def bundles(self, ep: Endpoint, substitute: bool) -> list[Bundle]:
        out = []
        for rid_hex in ep.stored_reqids():
            rid = self._rid(ep, rid_hex)
            m1, m3, m4, m5 = ep.load(rid, M1), ep.load(rid, M3), ep.load(rid, M4), ep.load(rid, M5)
            if m1 is None or m3 is None or m4 is None:
                continue
            rw = self.rewrites.get((ep.cid, rid_hex))
            if substitute and rw is not None:
                out.append(Bundle(rw.m1_alt, m3, rw.m4_alt, m5))
            else:
                out.append(Bundle(m1, m3, m4, m5))
        return out

    @staticmethod
    def _rid(ep: Endpoint, rid_hex: str) -> ReqId:
        return ReqId(int(rid_hex[:16], 16), int(rid_hex[16:], 16))

    # -- on-chain baseline exchange -------------------------------------------------------
    def bme_exchange(self, ep: Endpoint, log: SessionLog, f_pk: bytes, job: FileJob, sw: Stopwatch):
        sim, ledger = self.world.sim, self.world.ledger
        rid = ep.next_reqid()
        rid_hex = rid.hex()
        att = Attempt("failed", rid)
        terms = TradeTerms(ep.cid, rid, job.vid, job.price)
        m0 = M0.create(terms, self.keypair)
        ep.store(rid, m0)

        def mine(r: TxReceipt) -> bool:
            args = r.tx.args()
            return r.ok and args.get("cid") == ep.cid and args.get("reqid") == rid_hex

        agreed = ledger.wait_for("bme", "agree", lambda r: r.ok and r.result["cid"] == ep.cid
                                 and r.result["reqid"] == rid_hex)
        grant = DepositGrant(ep.cid, rid, job.price, deposit_sig(self.keypair, job.price))
        if not (self._send(ep, m0) and self._send(ep, grant)):
            att.reason = "channel closed"
            return att
        m1 = yield from sw.wait(self._recv(ep), "protocol")
        if not isinstance(m1, M1) or m1.terms != terms or not m1.valid(self.pk, f_pk):
            att.reason = "no agreement"
            return att
        ep.store(rid, m1)
        r = yield from sw.wait(sim.wait(agreed, self._chain_deadline()), "protocol",
                               chain=True)
        if r is TIMEOUT:
            att.reason = "agreement not committed"
            return att

        got = yield from self._receive_content(ep, sw, rid, att)
        if got is None:
            return att
        chunks, id_e = got
        m2 = M2.create(AckBody(ep.cid, rid, id_e), self.keypair)
        ep.store(rid, m2)
        if not self._send(ep, m2):
            att.reason = "channel closed"
            return att
        m3 = yield from sw.wait(self._recv(ep), "protocol")
        if not isinstance(m3, M3) or m3.body != m2.body or not m3.valid(self.pk, f_pk):
            att.reason = "acknowledgement not countersigned"
            return att
        ep.store(rid, m3)
        m4 = M4.create(IOU(self.pk, f_pk, job.price, ep.cid, rid), self.keypair)
        ep.store(rid, m4)

        keyed = ledger.wait_for("bme", "release_key", mine)
        tx = LedgerTx.call(self.pk, "bme", "ack", cid=ep.cid, reqid=rid_hex, m2=encode(m2), m3=encode(m3),
                           m4=encode(m4))
        r = yield from sw.wait(log.submit(tx, "buyer"), "protocol", chain=True)
        if not r.ok:
            att.reason = f"acknowledgement commit failed: {r.error}"
            return att
        att.iou_sent = True
        r = yield from sw.wait(sim.wait(keyed, self._chain_deadline()), "protocol",
                               chain=True)
        if r is TIMEOUT:
            self._trace("key_missing", cid=ep.cid, reqid=rid_hex)
            att.status, att.index, att.chunk = "dispute", 0, b""
            return att
        m5 = decode(r.tx.args()["m5"], M5)
        ep.store(rid, m5)
        att.m5 = m5
        yield from self._verify_cost(sw)
        plain = self._decrypt_and_verify(job, ep, rid, chunks, m5.release.k, att)
        if plain is not None:
            self._accept(job, plain, att)
        return att

    # -- ledger-free baseline -------------------------------------------------------------
    def vanilla_exchange(self, ep: Endpoint, job: FileJob, sw: Stopwatch):
        rid = ep.next_reqid()
        att = Attempt("failed", rid)
        m0 = M0.create(TradeTerms(ep.cid, rid, job.vid, job.price), self.keypair)
        if not self._send(ep, m0):
            att.reason = "connection closed"
            return att
        msg = yield from sw.wait(self._recv(ep), "transfer", latency_share=2 * ep.latency)
        if not isinstance(msg, PlainContent) or len(msg.chunks) != len(job.id_c):
            att.reason = "content not received"
            return att
        yield from self._verify_cost(sw)
        if any(crypto.hash(c) != h for c, h in zip(msg.chunks, job.id_c)):
            att.reason = "content hash mismatch"
            self._trace("vanilla_mismatch", vid=job.vid)
            return att
        self.library[job.vid] = tuple(msg.chunks)
        att.status = "ok"
        return att

"""Session drivers for the three compared delivery schemes.

``vader``   one channel per buyer/facilitator pair; only open, close and
            settlement touch the ledger. A dispute or failure closes the
            channel, waits for settlement, and a fresh channel serves the
            remaining files.
``bme``     every exchange commits its agreement, acknowledgement and key
            on chain, each waiting for block inclusion.
``vanilla`` plaintext delivery with hash checks and no ledger at all.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any

from .actors import (COLLUDER, DEFECTING, Attempt, Buyer, Facilitator, FileJob, SessionLog,
                     Stopwatch, World)
from .contracts import deposit_sig
from .contracts.dispute import AWAITING_KEY, BUYER_CHEATED
from .ledger import LedgerTx
from .wire import M1, M3, M4, Endpoint, connect, encode

PROTOCOLS = ("vader", "bme", "vanilla")

SUCCESS = "Success"
DISPUTED_REFUNDED = "DisputedRefunded"
DISPUTED_LOST = "DisputedLost"
FAILED = "Failed"
OUTCOMES = (SUCCESS, DISPUTED_REFUNDED, DISPUTED_LOST, FAILED)


@dataclass
class SessionPlan:
    """One buyer buying a list of files from one facilitator.

    Deposits of 0 are sized automatically: the buyer locks the sum of the
    remaining prices, the facilitator the bounty plus that sum.
    """

    protocol: str
    buyer: Buyer
    facilitator: Facilitator
    jobs: list[FileJob]
    latency: Fraction
    bandwidth_bps: Fraction
    buyer_deposit: int = 0
    facilitator_deposit: int = 0
    collude: bool = False
    sybil_vid: bytes | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.buyer_deposit < 0 or self.facilitator_deposit < 0:
            raise ValueError("deposits must be non-negative")
        if self.collude and self.sybil_vid is None:
            raise ValueError("collusion needs a sybil content id")


@dataclass
class ExchangeRecord:
    file_index: int
    vid: str
    price: int
    outcome: str
    reason: str
    e2e_ms: Fraction
    protocol_ms: Fraction
    transfer_ms: Fraction
    verify_ms: Fraction
    chain_ms: Fraction
    cid: str
    reqid: str | None
    retransmits: int = 0
    dispute_id: int | None = None
    dispute_status: str | None = None
    commits: int = 0


@dataclass
class SessionOutcome:
    protocol: str
    buyer: str
    facilitator: str
    exchanges: list[ExchangeRecord] = field(default_factory=list)
    commits: list[dict[str, Any]] = field(default_factory=list)
    disputes: list[dict[str, Any]] = field(default_factory=list)
    payouts: dict[str, int] = field(default_factory=dict)
    cids: list[bytes] = field(default_factory=list)
    claims: list[dict[str, Any]] = field(default_factory=list)
    rewrites: list[str] = field(default_factory=list)
    settlements: list[dict[str, Any]] = field(default_factory=list)
    log: SessionLog | None = field(default=None, repr=False, compare=False)

    @property
    def party_commits(self) -> int:
        return len(self.commits)

    @property
    def settles(self) -> int:
        return sum(1 for c in self.settlements if not c["deferred"])

    def commits_with_settle(self) -> list[dict[str, Any]]:
        return self.commits + self.settlements

    def to_json(self) -> str:
        body = {
            "protocol": self.protocol,
            "buyer": self.buyer,
            "facilitator": self.facilitator,
            "cids": [c.hex() for c in self.cids],
            "exchanges": [asdict(x) for x in self.exchanges],
            "commits": self.commits_with_settle(),
            "disputes": self.disputes,
            "claims": self.claims,
            "payouts": self.payouts,
        }
        return json.dumps(body, sort_keys=True, default=_plain)


def _plain(v: Any) -> Any:
    if isinstance(v, Fraction):
        return int(v) if v.denominator == 1 else float(v)
    if isinstance(v, bytes):
        return v.hex()
    raise TypeError(type(v).__name__)


# -- shared helpers -----------------------------------------------------------------


class _Session:
    def __init__(self, world: World, plan: SessionPlan):
        self.world = world
        self.plan = plan
        self.sim = world.sim
        self.ledger = world.ledger
        self.buyer = plan.buyer
        self.facilitator = plan.facilitator
        self.log = SessionLog(world, plan.protocol, plan.buyer, plan.facilitator)
        self.outcome = SessionOutcome(plan.protocol, plan.buyer.name, plan.facilitator.name)
        self.rng = random.Random(plan.seed)
        self.rewritten = False

    def connect(self, cid: bytes) -> Endpoint:
        ep_b, ep_f = connect(self.sim, cid, self.buyer.name, self.facilitator.name, self.plan.latency,
                             self.plan.bandwidth_bps, random.Random(self.rng.getrandbits(64)))
        self.facilitator.accept(ep_f, self.log, self.plan.protocol)
        self.outcome.cids.append(cid)
        return ep_b

    def finish(self, job: FileJob, sw: Stopwatch, outcome: str, att: Attempt | None, cid: bytes,
               reason: str = "", dispute: dict[str, Any] | None = None) -> None:
        assert outcome in OUTCOMES
        rec = ExchangeRecord(
            file_index=job.index, vid=job.vid.hex(), price=job.price, outcome=outcome,
            reason=reason or (att.reason if att else ""),
            e2e_ms=sw.e2e, protocol_ms=sw.parts["protocol"], transfer_ms=sw.parts["transfer"],
            verify_ms=sw.parts["verify"], chain_ms=sw.chain, cid=cid.hex(),
            reqid=att.reqid.hex() if att and att.reqid else None,
            retransmits=att.retransmits if att else 0,
            dispute_id=dispute["dispute_id"] if dispute else None,
            dispute_status=dispute["status"] if dispute else None,
        )
        self.outcome.exchanges.append(rec)
        if dispute:
            self.outcome.disputes.append(dict(dispute, file_index=job.index))

    def dispute_evidence(self, ep: Endpoint, att: Attempt, host: str) -> LedgerTx:
        rid = att.reqid
        return LedgerTx.call(
            self.buyer.pk, "dispute", "raise_dispute", host=host, buyer_pk=self.buyer.pk,
            facilitator_pk=self.facilitator.pk, m1=encode(ep.load(rid, M1)), m3=encode(ep.load(rid, M3)),
            m4=encode(ep.load(rid, M4)), m5=None if att.m5 is None else encode(att.m5),
            index=att.index, chunk=att.chunk)

    def await_dispute(self, sw: Stopwatch, dispute_id: int):
        """Wait until the dispute leaves AwaitingKey; returns the final status."""
        def mine(r) -> bool:
            return r.ok and r.tx.args()["dispute_id"] == dispute_id and r.result != AWAITING_KEY

        done = self.sim.any_of([self.ledger.wait_for("dispute", "submit_key", mine),
                                self.ledger.wait_for("dispute", "timeout", mine)])
        r = yield from sw.wait(done, "verify", chain=True)
        return r.result

    def wrap_up(self) -> SessionOutcome:
        self.outcome.log = self.log
        _tally_commits(self.outcome)
        return self.outcome


def _tally_commits(outcome: SessionOutcome) -> None:
    # facilitator counter-commits can land after the buyer is done
    commits = outcome.log.commits
    outcome.commits = [_commit_row(c) for c in commits]
    counts: dict[int, int] = {}
    for c in commits:
        if c["file_index"] is not None:
            counts[c["file_index"]] = counts.get(c["file_index"], 0) + 1
    for x in outcome.exchanges:
        x.commits = counts.get(x.file_index, 0)


def _commit_row(c: dict[str, Any]) -> dict[str, Any]:
    return {k: c.get(k) for k in ("contract", "op", "role", "file_index", "submit_time", "commit_time",
                                  "height", "ok", "error")}


# -- VADER -------------------------------------------------------------------------------


class VaderSession(_Session):
    def run(self):
        pending = deque(self.plan.jobs)
        first = True
        while first or pending:
            first = False
            sw = Stopwatch(self.sim)
            self.log.current_file = pending[0].index if pending else None
            cid = yield from self.open_channel(sw, pending)
            if cid is None:
                while pending:
                    job = pending.popleft()
                    self.finish(job, sw, FAILED, None, b"", "channel could not be opened")
                    sw = Stopwatch(self.sim)
                break
            ep = self.connect(cid)
            yield from self.serve(ep, pending, sw)
        self.log.current_file = None
        return self.wrap_up()

    def open_channel(self, sw: Stopwatch, pending: deque):
        total = sum(j.price for j in pending)
        b_amt = self.plan.buyer_deposit or max(total, 1)
        bounty = self.ledger.contracts["penalizer"].bounty
        f_amt = self.plan.facilitator_deposit or bounty + total
        tx = LedgerTx.call(self.buyer.pk, "channel", "channel_open", buyer_pk=self.buyer.pk, b_amt=b_amt,
                           sig_b=deposit_sig(self.buyer.keypair, b_amt), facilitator_pk=self.facilitator.pk,
                           f_amt=f_amt, sig_f=self.facilitator.deposit_authorization(f_amt),
                           tau=self.world.params.tau)
        r = yield from sw.wait(self.log.submit(tx, "buyer"), "protocol", chain=True)
        if not r.ok:
            self.world.trace(self.buyer.name, "open_failed", error=r.error)
            return None
        return r.result

    def settled(self, cid: bytes):
        return self.ledger.wait_for("channel", "channel_settle",
                                    lambda r: r.ok and r.result["cid"] == cid and not r.result["deferred"])

    def close_tx(self, ep: Endpoint, substitute: bool) -> LedgerTx:
        bundles = [b.to_arg() for b in self.buyer.bundles(ep, substitute)]
        return LedgerTx.call(self.buyer.pk, "channel", "channel_close", cid=ep.cid, bundles=bundles)

    @property
    def silent(self) -> bool:
        return self.plan.collude and self.buyer.strategy.kind == COLLUDER

    def serve(self, ep: Endpoint, pending: deque, sw: Stopwatch):
        while pending:
            job = pending.popleft()
            self.log.current_file = job.index
            att = yield from self.buyer.vader_exchange(ep, self.facilitator.pk, job, sw)
            if att.status == "ok":
                yield from self.maybe_collude(ep, att, sw)
            if att.status == "ok" and pending:
                self.finish(job, sw, SUCCESS, att, ep.cid)
                sw = Stopwatch(self.sim)
                continue
            if att.status == "ok":
                # last file: the close commit is part of its time
                ep.close("session complete")
                yield from sw.wait(self.log.submit(self.close_tx(ep, self.silent), "buyer"), "protocol",
                                   chain=True)
                self.finish(job, sw, SUCCESS, att, ep.cid)
                return
            if att.status == "dispute":
                yield from self.dispute(ep, job, att, sw)
            else:
                ep.close(att.reason)
                settled = self.settled(ep.cid)
                self.log.submit(self.close_tx(ep, self.silent), "buyer")
                yield from sw.wait(settled, "protocol", chain=True)
                self.finish(job, sw, FAILED, att, ep.cid)
            return
        # nothing left to buy on this channel
        ep.close("session complete")
        yield from sw.wait(self.log.submit(self.close_tx(ep, self.silent), "buyer"), "protocol", chain=True)

    def dispute(self, ep: Endpoint, job: FileJob, att: Attempt, sw: Stopwatch):
        ep.close("dispute")
        settled = self.settled(ep.cid)
        self.log.submit(self.close_tx(ep, self.silent), "buyer")
        r = yield from sw.wait(self.log.submit(self.dispute_evidence(ep, att, "channel"), "buyer"), "verify",
                               chain=True)
        if not r.ok:
            yield from sw.wait(settled, "verify", chain=True)
            self.finish(job, sw, FAILED, att, ep.cid, f"dispute rejected: {r.error}")
            return
        case = dict(r.result)
        if case["status"] == AWAITING_KEY:
            case["status"] = yield from self.await_dispute(sw, case["dispute_id"])
        # the refund only reaches the buyer when the channel settles
        yield from sw.wait(settled, "verify", chain=True)
        outcome = DISPUTED_LOST if case["status"] == BUYER_CHEATED else DISPUTED_REFUNDED
        self.finish(job, sw, outcome, att, ep.cid, dispute=case)

    def maybe_collude(self, ep: Endpoint, att: Attempt, sw: Stopwatch):
        kind = self.buyer.strategy.kind
        if not self.plan.collude or self.rewritten or kind not in (COLLUDER, DEFECTING):
            return
        self.rewritten = True
        rw = yield from self.buyer.propose_rewrite(ep, self.facilitator.pk, att.reqid, self.plan.sybil_vid, sw)
        if rw is None:
            return
        self.outcome.rewrites.append(att.reqid.hex())
        if kind == DEFECTING:
            tx = LedgerTx.call(self.buyer.pk, "penalizer", "submit_claim", buyer_pk=self.buyer.pk,
                               facilitator_pk=self.facilitator.pk, cid=ep.cid, m1=encode(rw.m1),
                               m1_alt=encode(rw.m1_alt))
            fut = self.log.submit(tx, "buyer")
            fut.add_callback(lambda r: self.outcome.claims.append(
                {"cid": ep.cid.hex(), "reqid": att.reqid.hex(), "ok": r.ok, "error": r.error,
                 "result": r.result}))


# -- BME -----------------------------------------------------------------------------


class BmeSession(_Session):
    def fresh_cid(self) -> bytes:
        return self.rng.getrandbits(128).to_bytes(16, "big")

    def run(self):
        ep = self.connect(self.fresh_cid())
        for job in self.plan.jobs:
            if ep.closed:
                ep = self.connect(self.fresh_cid())
            self.log.current_file = job.index
            sw = Stopwatch(self.sim)
            att = yield from self.buyer.bme_exchange(ep, self.log, self.facilitator.pk, job, sw)
            if att.status == "ok":
                self.finish(job, sw, SUCCESS, att, ep.cid)
            elif att.status == "dispute":
                r = yield from sw.wait(self.log.submit(self.dispute_evidence(ep, att, "bme"), "buyer"),
                                       "verify", chain=True)
                if not r.ok:
                    self.finish(job, sw, FAILED, att, ep.cid, f"dispute rejected: {r.error}")
                    continue
                case = dict(r.result)
                if case["status"] == AWAITING_KEY:
                    case["status"] = yield from self.await_dispute(sw, case["dispute_id"])
                outcome = DISPUTED_LOST if case["status"] == BUYER_CHEATED else DISPUTED_REFUNDED
                self.finish(job, sw, outcome, att, ep.cid, dispute=case)
            else:
                ep.close(att.reason)
                self.finish(job, sw, FAILED, att, ep.cid)
        ep.close("session complete")
        self.log.current_file = None
        return self.wrap_up()


# -- VANILLA ---------------------------------------------------------------------------


class VanillaSession(_Session):
    def run(self):
        cid = self.rng.getrandbits(128).to_bytes(16, "big")
        ep = self.connect(cid)
        paid = 0
        for job in self.plan.jobs:
            if ep.closed:
                ep = self.connect(self.rng.getrandbits(128).to_bytes(16, "big"))
            sw = Stopwatch(self.sim)
            att = yield from self.buyer.vanilla_exchange(ep, job, sw)
            if att.status == "ok":
                paid += job.price
                self.finish(job, sw, SUCCESS, att, ep.cid)
            else:
                ep.close(att.reason)
                self.finish(job, sw, FAILED, att, ep.cid)
        ep.close("session complete")
        # off-ledger bookkeeping only
        self.outcome.payouts = {"paid": paid}
        return self.wrap_up()


DRIVERS = {"vader": VaderSession, "bme": BmeSession, "vanilla": VanillaSession}


def start_session(world: World, plan: SessionPlan):
    """Spawn the session process; its value is the :class:`SessionOutcome`."""
    session = DRIVERS[plan.protocol](world, plan)
    return world.sim.spawn(session.run(), f"session/{plan.buyer.name}")


def collect_payouts(world: World, outcome: SessionOutcome) -> None:
    """Fill ``outcome.payouts`` and settle rows from the final ledger state."""
    if outcome.log is not None:
        _tally_commits(outcome)
    if outcome.protocol == "vanilla":
        return
    ledger = world.ledger
    totals = {"paid": 0, "royalties": 0, "refunds": 0, "bounties": 0}
    settles = []
    if outcome.protocol == "vader":
        channels = ledger.contracts["channel"].channels
        for cid in outcome.cids:
            rec = channels.get(cid)
            if rec is None or rec.report is None:
                continue
            rep = rec.report
            totals["paid"] += sum(rep["paid"].values())
            totals["royalties"] += sum(rep["royalties"].values())
            totals["refunds"] += sum(rep["refunds"].values())
            totals["bounties"] += rep["bounties"]
        for r in ledger.receipts():
            if r.tx.op == "channel_settle" and r.ok and r.tx.args()["cid"] in outcome.cids:
                settles.append({"contract": "channel", "op": "channel_settle", "role": "system",
                                "file_index": None, "submit_time": r.tx.submit_time,
                                "commit_time": r.commit_time, "height": r.height, "ok": r.ok,
                                "error": r.error, "deferred": r.result["deferred"]})
    else:
        cids = set(outcome.cids)
        for ex in ledger.contracts["bme"].exchanges.values():
            if ex.cid not in cids:
                continue
            if ex.stage == "Paid":
                totals["paid"] += ex.price
                totals["royalties"] += ex.royalty
            elif ex.stage == "Refunded":
                totals["refunds"] += ex.price
    outcome.payouts = totals
    outcome.settlements = settles


def _run_alone(plan: SessionPlan) -> SessionOutcome:
    world = plan.buyer.world
    proc = start_session(world, plan)
    world.sim.run()
    if not proc.done:
        raise RuntimeError("session did not terminate")
    collect_payouts(world, proc.value)
    return proc.value


def run_vader(plan: SessionPlan) -> SessionOutcome:
    assert plan.protocol == "vader"
    return _run_alone(plan)


def run_bme(plan: SessionPlan) -> SessionOutcome:
    assert plan.protocol == "bme"
    return _run_alone(plan)


def run_vanilla(plan: SessionPlan) -> SessionOutcome:
    assert plan.protocol == "vanilla"
    return _run_alone(plan)


__all__ = [
    "PROTOCOLS",
    "OUTCOMES",
    "SUCCESS",
    "DISPUTED_REFUNDED",
    "DISPUTED_LOST",
    "FAILED",
    "SessionPlan",
    "SessionOutcome",
    "ExchangeRecord",
    "start_session",
    "collect_payouts",
    "run_vader",
    "run_bme",
    "run_vanilla",
]

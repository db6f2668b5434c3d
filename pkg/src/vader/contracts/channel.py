"""State channel between one buyer and one facilitator.

Opening locks both deposits in arbiter escrows. Closing starts a window of
``tau`` blocks during which either side may add signed exchange bundles.
Settlement runs automatically one block after the window: disputes resolve
first, then IOUs are paid, then royalties, then residual deposits return.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any

from ..ledger import CallContext, ContractError
from ..wire import IOU, M1, M3, M4, M5, WireError, decode, encode
from .base import BaseContract
from .escrow import arbiter
from .registry import royalty

OPEN, CLOSING, CLOSED = "Open", "Closing", "Closed"


@dataclass(frozen=True)
class Bundle:
    """Evidence for one exchange: agreement, acknowledgement, IOU, and optionally the key."""

    m1: M1
    m3: M3
    m4: M4
    m5: M5 | None = None

    def to_arg(self) -> dict[str, Any]:
        return {
            "m1": encode(self.m1),
            "m3": encode(self.m3),
            "m4": encode(self.m4),
            "m5": None if self.m5 is None else encode(self.m5),
        }

    @classmethod
    def from_arg(cls, raw: dict[str, Any]) -> "Bundle":
        m5 = raw.get("m5")
        return cls(
            decode(raw["m1"], M1),
            decode(raw["m3"], M3),
            decode(raw["m4"], M4),
            None if m5 is None else decode(m5, M5),
        )


def bundle_problem(b: Bundle, cid: bytes, buyer_pk: bytes, facilitator_pk: bytes) -> str | None:
    """Why a bundle is unusable at settlement, or None if it is valid."""
    terms = b.m1.terms
    if terms.cid != cid:
        return "cid mismatch"
    if not b.m1.valid(buyer_pk, facilitator_pk):
        return "agreement signatures invalid"
    if not b.m3.valid(buyer_pk, facilitator_pk):
        return "acknowledgement signatures invalid"
    if (b.m3.body.cid, b.m3.body.reqid) != (cid, terms.reqid):
        return "acknowledgement bound to another request"
    if not b.m4.valid(buyer_pk):
        return "IOU signature invalid"
    iou = b.m4.iou
    if (iou.from_pk, iou.to_pk, iou.amount, iou.cid, iou.reqid) != (
            buyer_pk, facilitator_pk, terms.price, cid, terms.reqid):
        return "IOU does not match the agreement"
    if b.m5 is not None:
        if not b.m5.valid(facilitator_pk):
            return "key release signature invalid"
        if (b.m5.release.cid, b.m5.release.reqid) != (cid, terms.reqid):
            return "key release bound to another request"
    return None


@dataclass
class Queued:
    reqid: str
    counter: int
    vid: bytes
    price: int
    iou: IOU
    submitted_by: bytes

    def to_dict(self) -> dict[str, Any]:
        return {"reqid": self.reqid, "counter": self.counter, "vid": self.vid.hex(),
                "price": self.price, "submitted_by": self.submitted_by.hex()}


@dataclass
class ChannelRecord:
    cid: bytes
    buyer_pk: bytes
    facilitator_pk: bytes
    buyer_escrow: int
    facilitator_escrow: int
    tau: int
    opened_at: int
    state: str = OPEN
    timer_started: bool = False
    deadline: int | None = None
    queued: dict[str, Queued] = field(default_factory=dict)
    invalid: list[dict[str, Any]] = field(default_factory=list)
    disputes: list[int] = field(default_factory=list)
    refunds: dict[str, int] = field(default_factory=dict)
    bounties: int = 0
    report: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "cid": self.cid.hex(),
            "buyer_pk": self.buyer_pk.hex(),
            "facilitator_pk": self.facilitator_pk.hex(),
            "buyer_escrow": self.buyer_escrow,
            "facilitator_escrow": self.facilitator_escrow,
            "tau": self.tau,
            "opened_at": self.opened_at,
            "state": self.state,
            "timer_started": self.timer_started,
            "deadline": self.deadline,
            "queued": [q.to_dict() for q in sorted(self.queued.values(), key=lambda q: q.counter)],
            "invalid": list(self.invalid),
            "disputes": list(self.disputes),
            "refunds": dict(self.refunds),
            "bounties": self.bounties,
            "report": self.report,
        }


class ChannelContract(BaseContract):
    name = "channel"
    OPS = ("channel_open", "channel_close", "channel_settle")

    def __init__(self, seed: int = 0) -> None:
        super().__init__()
        self.channels: dict[bytes, ChannelRecord] = {}
        self._rng = random.Random(seed)

    def get(self, cid: bytes) -> ChannelRecord:
        try:
            return self.channels[cid]
        except KeyError:
            raise ContractError(f"unknown channel {cid.hex()}") from None

    def _fresh_cid(self) -> bytes:
        while True:
            cid = self._rng.getrandbits(128).to_bytes(16, "big")
            if cid not in self.channels:
                return cid

    # -- open ------------------------------------------------------------------
    def op_channel_open(self, ctx: CallContext, buyer_pk: bytes, b_amt: int, sig_b: bytes,
                        facilitator_pk: bytes, f_amt: int, sig_f: bytes, tau: int) -> bytes:
        if ctx.submitter not in (buyer_pk, facilitator_pk):
            raise ContractError("channel must be opened by one of its parties")
        if buyer_pk == facilitator_pk:
            raise ContractError("buyer and facilitator must differ")
        if tau < 1:
            raise ContractError("settlement timeout must be at least one block")
        bounty = self.peer(ctx, "penalizer").bounty
        if f_amt < bounty:
            raise ContractError(f"facilitator deposit {f_amt} below bounty {bounty}")
        escrow = self.peer(ctx, "escrow")
        # validate both sides before touching balances so the open is atomic
        escrow.check_open(ctx, buyer_pk, b_amt, sig_b)
        escrow.check_open(ctx, facilitator_pk, f_amt, sig_f)
        cond = arbiter(self.name)
        eb = escrow.open(ctx, buyer_pk, b_amt, sig_b, None, cond)
        ef = escrow.open(ctx, facilitator_pk, f_amt, sig_f, None, cond)
        rec = ChannelRecord(self._fresh_cid(), buyer_pk, facilitator_pk, eb, ef, tau, ctx.height)
        self.channels[rec.cid] = rec
        self._snapshot(ctx, rec.cid, rec)
        return rec.cid

    # -- close -----------------------------------------------------------------
    def op_channel_close(self, ctx: CallContext, cid: bytes, bundles: list) -> dict[str, Any]:
        rec = self.get(cid)
        if ctx.submitter not in (rec.buyer_pk, rec.facilitator_pk):
            raise ContractError("only channel parties may close")
        if rec.state == CLOSED:
            raise ContractError("channel already settled")
        if rec.timer_started and ctx.height >= rec.deadline:
            raise ContractError("closing window has ended")
        accepted, rejected = [], []
        counters = {q.counter for q in rec.queued.values()}
        registry = self.peer(ctx, "registry")
        for raw in bundles:
            try:
                b = Bundle.from_arg(raw)
            except (WireError, KeyError, TypeError) as exc:
                rejected.append({"reqid": None, "reason": f"malformed bundle: {exc}"})
                continue
            reqid = b.m1.terms.reqid
            problem = bundle_problem(b, cid, rec.buyer_pk, rec.facilitator_pk)
            if problem is None and registry.lookup(b.m1.terms.vid) is None:
                problem = "content not registered"
            if problem is None and (reqid.hex() in rec.queued or reqid.counter in counters):
                problem = "duplicate reqid"
            if problem is not None:
                rejected.append({"reqid": reqid.hex(), "reason": problem})
                continue
            rec.queued[reqid.hex()] = Queued(reqid.hex(), reqid.counter, b.m1.terms.vid,
                                             b.m1.terms.price, b.m4.iou, ctx.submitter)
            counters.add(reqid.counter)
            accepted.append(reqid.hex())
        rec.invalid.extend(dict(r, submitted_by=ctx.submitter.hex()) for r in rejected)
        if not rec.timer_started:
            rec.timer_started = True
            rec.state = CLOSING
            rec.deadline = ctx.height + rec.tau
            ctx.ledger.schedule_call(rec.deadline + 1, self.name, "channel_settle", cid=cid)
        self._snapshot(ctx, cid, rec)
        return {"cid": cid, "accepted": accepted, "rejected": rejected, "deadline": rec.deadline}

    # -- hooks used by the dispute resolver and penalizer ------------------------
    def dispute_context(self, ctx: CallContext, cid: bytes, reqid: str, buyer_pk: bytes,
                        facilitator_pk: bytes) -> int:
        rec = self.get(cid)
        if (rec.buyer_pk, rec.facilitator_pk) != (buyer_pk, facilitator_pk):
            raise ContractError("dispute parties do not match the channel")
        if rec.state != CLOSING:
            raise ContractError("disputes require a closing channel")
        return rec.tau

    def register_dispute(self, ctx: CallContext, cid: bytes, dispute_id: int) -> None:
        rec = self.get(cid)
        rec.disputes.append(dispute_id)
        self._snapshot(ctx, cid, rec)

    def on_dispute_resolved(self, ctx: CallContext, case) -> None:
        if not case.upheld:
            return
        rec = self.get(case.cid)
        moved = self.peer(ctx, "escrow").transfer(
            ctx, rec.facilitator_escrow, rec.buyer_escrow, case.price, self.name)
        rec.refunds[case.reqid] = moved
        self._snapshot(ctx, case.cid, rec)

    def penalize(self, ctx: CallContext, cid: bytes, amount: int) -> int:
        rec = self.get(cid)
        moved = self.peer(ctx, "escrow").transfer(
            ctx, rec.facilitator_escrow, rec.buyer_escrow, amount, self.name)
        rec.bounties += moved
        self._snapshot(ctx, cid, rec)
        return moved

    def parties(self, cid: bytes) -> tuple[bytes, bytes, str]:
        rec = self.get(cid)
        return rec.buyer_pk, rec.facilitator_pk, rec.state

    # -- settlement ----------------------------------------------------------------
    def op_channel_settle(self, ctx: CallContext, cid: bytes) -> dict[str, Any]:
        rec = self.get(cid)
        if rec.state != CLOSING or ctx.height < rec.deadline:
            raise ContractError("channel is not ready to settle")
        resolver = self.peer(ctx, "dispute")
        cases = [resolver.cases[d] for d in rec.disputes]
        pending = [c for c in cases if not c.terminal]
        if pending:
            later = max(c.deadline for c in pending) + 1
            ctx.ledger.schedule_call(later, self.name, "channel_settle", cid=cid)
            return {"cid": cid, "deferred": True, "retry_at": later}

        escrow = self.peer(ctx, "escrow")
        registry = self.peer(ctx, "registry")
        exchanges: dict[str, tuple[bytes, int, IOU]] = {
            q.reqid: (q.vid, q.price, q.iou) for q in rec.queued.values()}
        for case in cases:
            exchanges.setdefault(case.reqid, (case.vid, case.price, case.iou))
        order = sorted(exchanges, key=lambda r: exchanges[r][2].reqid.counter)

        escrow.set_timeout(ctx, rec.buyer_escrow, ctx.height, self.name)
        escrow.set_timeout(ctx, rec.facilitator_escrow, ctx.height, self.name)
        paid_results = escrow.process_iou(
            ctx, rec.buyer_escrow, [exchanges[r][2] for r in order], None, caller=self.name)
        paid = [r for r, res in zip(order, paid_results) if res["paid"]]

        royalties: dict[str, int] = {}
        for r in paid:
            if r in rec.refunds:
                continue
            vid, price, _iou = exchanges[r]
            content = registry.lookup(vid)
            cut = royalty(price, content.amt_o) if content else 0
            if cut <= 0 or content.owner_pk == rec.facilitator_pk:
                continue
            iou = IOU(rec.facilitator_pk, content.owner_pk, cut, cid, exchanges[r][2].reqid)
            res = escrow.process_iou(ctx, rec.facilitator_escrow, [iou], None, caller=self.name)
            if res[0]["paid"]:
                royalties[r] = cut

        buyer_back = escrow.close(ctx, rec.buyer_escrow)
        facilitator_back = escrow.close(ctx, rec.facilitator_escrow)
        rec.state = CLOSED
        rec.report = {
            "paid": {r: exchanges[r][1] for r in paid},
            "unpaid": [r for r in order if r not in paid],
            "royalties": royalties,
            "refunds": dict(rec.refunds),
            "bounties": rec.bounties,
            "buyer_refund": buyer_back,
            "facilitator_refund": facilitator_back,
        }
        self._snapshot(ctx, cid, rec)
        return {"cid": cid, "deferred": False, **rec.report}

    def dump(self) -> dict[str, Any]:
        return {"channels": [self.channels[c].to_dict() for c in sorted(self.channels)]}

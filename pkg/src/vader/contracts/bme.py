"""Blockchain-mediated exchange: every exchange commits on chain three times.

Commit one records the agreement and locks the buyer's payment in a fresh
escrow. Commit two records the acknowledgement and IOU. Commit three
publishes the key. The escrow pays out ``tau`` blocks after the key lands,
leaving room for a dispute; without a key it returns to the buyer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from ..ledger import CallContext, ContractError
from ..wire import IOU, M1, M2, M3, M4, M5, WireError, decode, encode
from .base import BaseContract
from .escrow import arbiter
from .registry import royalty

AGREED, ACKED, KEYED, PAID, REFUNDED = "Agreed", "Acked", "Keyed", "Paid", "Refunded"


@dataclass
class Exchange:
    cid: bytes
    reqid: str
    buyer_pk: bytes
    facilitator_pk: bytes
    vid: bytes
    price: int
    escrow_id: int
    agreed_at: int
    m1: bytes
    stage: str = AGREED
    acked_at: int | None = None
    keyed_at: int | None = None
    m5: bytes | None = None
    dispute_id: int | None = None
    royalty: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "cid": self.cid.hex(),
            "reqid": self.reqid,
            "buyer_pk": self.buyer_pk.hex(),
            "facilitator_pk": self.facilitator_pk.hex(),
            "vid": self.vid.hex(),
            "price": self.price,
            "escrow_id": self.escrow_id,
            "agreed_at": self.agreed_at,
            "acked_at": self.acked_at,
            "keyed_at": self.keyed_at,
            "stage": self.stage,
            "dispute_id": self.dispute_id,
            "royalty": self.royalty,
        }


class BmeContract(BaseContract):
    name = "bme"
    OPS = ("agree", "ack", "release_key", "release")

    def __init__(self, tau: int) -> None:
        super().__init__()
        if tau < 2:
            raise ValueError("tau must leave at least one block for a dispute")
        self.tau = tau
        self.exchanges: dict[tuple[bytes, str], Exchange] = {}

    def get(self, cid: bytes, reqid: str) -> Exchange:
        try:
            return self.exchanges[(cid, reqid)]
        except KeyError:
            raise ContractError(f"unknown exchange {cid.hex()}/{reqid}") from None

    def op_agree(self, ctx: CallContext, m1: bytes, buyer_pk: bytes, facilitator_pk: bytes,
                 deposit_sig: bytes) -> dict[str, Any]:
        if ctx.submitter != facilitator_pk:
            raise ContractError("agreements are committed by the facilitator")
        try:
            a = decode(m1, M1)
        except WireError as exc:
            raise ContractError(f"malformed agreement: {exc}") from None
        if not a.valid(buyer_pk, facilitator_pk):
            raise ContractError("agreement signatures invalid")
        terms = a.terms
        key = (terms.cid, terms.reqid.hex())
        if key in self.exchanges:
            raise ContractError("reqid already used in this session")
        if self.peer(ctx, "registry").lookup(terms.vid) is None:
            raise ContractError("content not registered")
        escrow_id = self.peer(ctx, "escrow").open(ctx, buyer_pk, terms.price, deposit_sig, None,
                                                 arbiter(self.name))
        ex = Exchange(terms.cid, key[1], buyer_pk, facilitator_pk, terms.vid, terms.price, escrow_id,
                      ctx.height, m1)
        self.exchanges[key] = ex
        # without a published key the payment goes back to the buyer
        ctx.ledger.schedule_call(ctx.height + 3 * self.tau, self.name, "release", cid=ex.cid, reqid=ex.reqid)
        self._snapshot(ctx, key, ex)
        return {"cid": ex.cid, "reqid": ex.reqid, "escrow_id": escrow_id}

    def op_ack(self, ctx: CallContext, cid: bytes, reqid: str, m2: bytes, m3: bytes, m4: bytes) -> str:
        ex = self.get(cid, reqid)
        if ctx.submitter != ex.buyer_pk:
            raise ContractError("acknowledgements are committed by the buyer")
        if ex.stage != AGREED:
            raise ContractError(f"exchange is {ex.stage}, expected {AGREED}")
        try:
            req, ack, pay = decode(m2, M2), decode(m3, M3), decode(m4, M4)
        except WireError as exc:
            raise ContractError(f"malformed acknowledgement: {exc}") from None
        if not req.valid(ex.buyer_pk) or not ack.valid(ex.buyer_pk, ex.facilitator_pk):
            raise ContractError("acknowledgement signatures invalid")
        if req.body != ack.body or (ack.body.cid, ack.body.reqid.hex()) != (cid, reqid):
            raise ContractError("acknowledgement bound to another request")
        iou = pay.iou
        if not pay.valid(ex.buyer_pk) or (iou.from_pk, iou.to_pk, iou.amount, iou.cid, iou.reqid.hex()) != (
                ex.buyer_pk, ex.facilitator_pk, ex.price, cid, reqid):
            raise ContractError("IOU does not match the agreement")
        ex.stage, ex.acked_at = ACKED, ctx.height
        self._snapshot(ctx, (cid, reqid), ex)
        return ex.stage

    def op_release_key(self, ctx: CallContext, cid: bytes, reqid: str, m5: bytes) -> str:
        ex = self.get(cid, reqid)
        if ctx.submitter != ex.facilitator_pk:
            raise ContractError("keys are committed by the facilitator")
        if ex.stage != ACKED:
            raise ContractError(f"exchange is {ex.stage}, expected {ACKED}")
        try:
            rel = decode(m5, M5)
        except WireError as exc:
            raise ContractError(f"malformed key release: {exc}") from None
        if not rel.valid(ex.facilitator_pk) or (rel.release.cid, rel.release.reqid.hex()) != (cid, reqid):
            raise ContractError("key release invalid")
        ex.stage, ex.keyed_at, ex.m5 = KEYED, ctx.height, m5
        ctx.ledger.schedule_call(ctx.height + self.tau, self.name, "release", cid=cid, reqid=reqid)
        self._snapshot(ctx, (cid, reqid), ex)
        return ex.stage

    def op_release(self, ctx: CallContext, cid: bytes, reqid: str) -> dict[str, Any]:
        if not ctx.system:
            raise ContractError("escrow release is triggered by the ledger")
        ex = self.get(cid, reqid)
        if ex.stage in (PAID, REFUNDED):
            return {"stage": ex.stage}
        if ex.dispute_id is not None:
            case = self.peer(ctx, "dispute").cases[ex.dispute_id]
            if not case.terminal:
                ctx.ledger.schedule_call(case.deadline + 1, self.name, "release", cid=cid, reqid=reqid)
                return {"stage": ex.stage, "deferred": True}
        escrow = self.peer(ctx, "escrow")
        if ex.stage == KEYED:
            if ctx.height < ex.keyed_at + self.tau:
                return {"stage": ex.stage, "early": True}
            content = self.peer(ctx, "registry").lookup(ex.vid)
            cut = royalty(ex.price, content.amt_o) if content.owner_pk != ex.facilitator_pk else 0
            reqid_obj = decode(ex.m1, M1).terms.reqid
            ious = []
            if ex.price - cut > 0:
                ious.append(IOU(ex.buyer_pk, ex.facilitator_pk, ex.price - cut, cid, reqid_obj))
            if cut > 0:
                ious.append(IOU(ex.buyer_pk, content.owner_pk, cut, cid, reqid_obj))
            escrow.set_timeout(ctx, ex.escrow_id, ctx.height, self.name)
            escrow.process_iou(ctx, ex.escrow_id, ious, None, caller=self.name)
            escrow.close(ctx, ex.escrow_id)
            ex.stage, ex.royalty = PAID, cut
        else:
            self._refund(ctx, ex)
        self._snapshot(ctx, (cid, reqid), ex)
        return {"stage": ex.stage}

    def _refund(self, ctx: CallContext, ex: Exchange) -> None:
        escrow = self.peer(ctx, "escrow")
        escrow.set_timeout(ctx, ex.escrow_id, ctx.height, self.name)
        escrow.close(ctx, ex.escrow_id)
        ex.stage = REFUNDED

    # -- dispute host hooks --------------------------------------------------------
    def dispute_context(self, ctx: CallContext, cid: bytes, reqid: str, buyer_pk: bytes,
                        facilitator_pk: bytes) -> int:
        ex = self.get(cid, reqid)
        if (ex.buyer_pk, ex.facilitator_pk) != (buyer_pk, facilitator_pk):
            raise ContractError("dispute parties do not match the exchange")
        if ex.stage not in (ACKED, KEYED):
            raise ContractError(f"exchange is {ex.stage}; nothing to dispute")
        return self.tau

    def register_dispute(self, ctx: CallContext, cid: bytes, dispute_id: int) -> None:
        case = self.peer(ctx, "dispute").cases[dispute_id]
        ex = self.get(cid, case.reqid)
        ex.dispute_id = dispute_id
        self._snapshot(ctx, (cid, case.reqid), ex)

    def on_dispute_resolved(self, ctx: CallContext, case) -> None:
        ex = self.get(case.cid, case.reqid)
        if case.upheld and ex.stage not in (PAID, REFUNDED):
            self._refund(ctx, ex)
            self._snapshot(ctx, (case.cid, case.reqid), ex)

    def dump(self) -> dict[str, Any]:
        return {"exchanges": [self.exchanges[k].to_dict() for k in sorted(self.exchanges)]}


def agreement_args(m1: M1, buyer_pk: bytes, facilitator_pk: bytes, deposit_sig: bytes) -> dict[str, Any]:
    return {"m1": encode(m1), "buyer_pk": buyer_pk, "facilitator_pk": facilitator_pk,
            "deposit_sig": deposit_sig}

"""Penalizer: pays the buyer a bounty from the facilitator's deposit when two
co-signed agreements share (cid, reqid) but name different content."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from ..ledger import CallContext, ContractError
from ..wire import M1, WireError, decode
from .base import BaseContract


@dataclass
class Claim:
    claim_id: int
    cid: bytes
    reqid: str
    buyer_pk: bytes
    facilitator_pk: bytes
    vid_a: bytes
    vid_b: bytes
    price_a: int
    price_b: int
    bounty_paid: int
    height: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "cid": self.cid.hex(),
            "reqid": self.reqid,
            "buyer_pk": self.buyer_pk.hex(),
            "facilitator_pk": self.facilitator_pk.hex(),
            "vid_a": self.vid_a.hex(),
            "vid_b": self.vid_b.hex(),
            "price_a": self.price_a,
            "price_b": self.price_b,
            "bounty_paid": self.bounty_paid,
            "height": self.height,
        }


def claim_holds(a: M1, b: M1, buyer_pk: bytes, facilitator_pk: bytes, cid: bytes) -> str | None:
    """Reason the claim fails, or None if it proves collusion."""
    if not (a.valid(buyer_pk, facilitator_pk) and b.valid(buyer_pk, facilitator_pk)):
        return "Message signatures Invalid"
    if a.terms.cid != cid or b.terms.cid != cid:
        return "agreements belong to another channel"
    if a.terms.reqid != b.terms.reqid:
        return "agreements have different reqids"
    if a.terms.vid == b.terms.vid:
        return "agreements name the same content"
    return None


class PenalizerContract(BaseContract):
    name = "penalizer"
    OPS = ("submit_claim",)

    def __init__(self, bounty: int) -> None:
        super().__init__()
        if bounty <= 0:
            raise ValueError("bounty must be positive")
        self.bounty = bounty
        self.claims: dict[int, Claim] = {}
        self._claimed: set[tuple[bytes, str]] = set()
        self._next_id = 1

    def op_submit_claim(self, ctx: CallContext, buyer_pk: bytes, facilitator_pk: bytes, cid: bytes,
                        m1: bytes, m1_alt: bytes) -> dict[str, Any]:
        if ctx.submitter != buyer_pk:
            raise ContractError("claims are submitted by the buyer")
        channels = self.peer(ctx, "channel")
        b, f, state = channels.parties(cid)
        if (b, f) != (buyer_pk, facilitator_pk):
            raise ContractError("claim parties do not match the channel")
        if state == "Closed":
            raise ContractError("channel escrows already closed")
        try:
            a, alt = decode(m1, M1), decode(m1_alt, M1)
        except WireError as exc:
            raise ContractError(f"malformed agreement: {exc}") from None
        reason = claim_holds(a, alt, buyer_pk, facilitator_pk, cid)
        if reason is not None:
            raise ContractError(reason)
        key = (cid, a.terms.reqid.hex())
        if key in self._claimed:
            raise ContractError("bounty already claimed for this request")
        moved = channels.penalize(ctx, cid, self.bounty)
        self._claimed.add(key)
        claim = Claim(self._next_id, cid, key[1], buyer_pk, facilitator_pk, a.terms.vid, alt.terms.vid,
                      a.terms.price, alt.terms.price, moved, ctx.height)
        self._next_id += 1
        self.claims[claim.claim_id] = claim
        self._snapshot(ctx, claim.claim_id, claim)
        return {"claim_id": claim.claim_id, "bounty_paid": moved}

    def dump(self) -> dict[str, Any]:
        return {"bounty": self.bounty, "claims": [self.claims[c].to_dict() for c in sorted(self.claims)]}

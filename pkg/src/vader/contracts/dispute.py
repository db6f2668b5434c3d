"""On-chain dispute resolution for a single exchange.

The buyer submits the signed agreement, acknowledgement, IOU and (if it has
one) the key release, plus the index and plaintext of the chunk it claims is
wrong. With a key that re-encrypts the chunk to the acknowledged ciphertext
hash, the plaintext hash alone decides who cheated. Without such a key the
facilitator gets ``tau`` blocks to supply one, after which the buyer is
refunded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .. import crypto
from ..ledger import CallContext, ContractError
from ..wire import IOU, M1, M3, M4, M5, WireError, chunk_ad, decode
from .base import BaseContract

AWAITING_KEY = "AwaitingKey"
BUYER_REFUNDED = "BuyerRefunded"
BUYER_CHEATED = "BuyerCheated"
FACILITATOR_CHEATED = "FacilitatorCheated"
UPHELD = (BUYER_REFUNDED, FACILITATOR_CHEATED)


@dataclass
class DisputeCase:
    dispute_id: int
    host: str
    cid: bytes
    reqid: str
    vid: bytes
    price: int
    index: int
    chunk: bytes
    buyer_pk: bytes
    facilitator_pk: bytes
    iou: IOU
    id_e: tuple[bytes, ...]
    had_key: bool
    opened_at: int
    deadline: int
    status: str = AWAITING_KEY
    resolved_at: int | None = None

    @property
    def terminal(self) -> bool:
        return self.status != AWAITING_KEY

    @property
    def upheld(self) -> bool:
        return self.status in UPHELD

    def to_dict(self) -> dict[str, Any]:
        return {
            "dispute_id": self.dispute_id,
            "host": self.host,
            "cid": self.cid.hex(),
            "reqid": self.reqid,
            "vid": self.vid.hex(),
            "price": self.price,
            "index": self.index,
            "chunk_hash": crypto.hash(self.chunk).hex(),
            "buyer_pk": self.buyer_pk.hex(),
            "facilitator_pk": self.facilitator_pk.hex(),
            "had_key": self.had_key,
            "opened_at": self.opened_at,
            "deadline": self.deadline,
            "status": self.status,
            "resolved_at": self.resolved_at,
        }


def reencrypts(k: bytes, chunk: bytes, cid: bytes, reqid, index: int, expected: bytes) -> bool:
    return crypto.hash(crypto.enc(k, chunk, chunk_ad(cid, reqid, index))) == expected


class DisputeContract(BaseContract):
    name = "dispute"
    OPS = ("raise_dispute", "submit_key", "timeout")
    HOSTS = ("channel", "bme")

    def __init__(self) -> None:
        super().__init__()
        self.cases: dict[int, DisputeCase] = {}
        self._by_exchange: dict[tuple[str, bytes, str], int] = {}
        self._next_id = 1

    def find(self, host: str, cid: bytes, reqid: str) -> DisputeCase | None:
        d = self._by_exchange.get((host, cid, reqid))
        return None if d is None else self.cases[d]

    def op_raise_dispute(self, ctx: CallContext, host: str, buyer_pk: bytes, facilitator_pk: bytes,
                         m1: bytes, m3: bytes, m4: bytes, m5: bytes | None, index: int,
                         chunk: bytes) -> dict[str, Any]:
        if host not in self.HOSTS:
            raise ContractError(f"unknown dispute host {host!r}")
        if ctx.submitter != buyer_pk:
            raise ContractError("disputes are raised by the buyer")
        try:
            a, ack, pay = decode(m1, M1), decode(m3, M3), decode(m4, M4)
            release = None if m5 is None else decode(m5, M5)
        except WireError as exc:
            raise ContractError(f"malformed evidence: {exc}") from None
        terms = a.terms
        cid, reqid = terms.cid, terms.reqid
        if not a.valid(buyer_pk, facilitator_pk) or not ack.valid(buyer_pk, facilitator_pk):
            raise ContractError("evidence signatures invalid")
        if not pay.valid(buyer_pk):
            raise ContractError("evidence signatures invalid")
        if (ack.body.cid, ack.body.reqid) != (cid, reqid):
            raise ContractError("acknowledgement bound to another request")
        iou = pay.iou
        if (iou.from_pk, iou.to_pk, iou.amount, iou.cid, iou.reqid) != (
                buyer_pk, facilitator_pk, terms.price, cid, reqid):
            raise ContractError("IOU does not match the agreement")
        if release is not None:
            if not release.valid(facilitator_pk):
                raise ContractError("evidence signatures invalid")
            if (release.release.cid, release.release.reqid) != (cid, reqid):
                raise ContractError("key release bound to another request")
        if not 0 <= index < len(ack.body.id_e):
            raise ContractError("no ciphertext hash for the disputed index")
        content = self.peer(ctx, "registry").lookup(terms.vid)
        if content is None or index >= len(content.id_c):
            raise ContractError("disputed content or chunk not registered")
        if (host, cid, reqid.hex()) in self._by_exchange:
            raise ContractError("exchange already disputed")
        tau = self.peer(ctx, host).dispute_context(
            ctx, cid, reqid.hex(), buyer_pk, facilitator_pk)

        case = DisputeCase(self._next_id, host, cid, reqid.hex(), terms.vid, terms.price, index,
                           chunk, buyer_pk, facilitator_pk, iou, ack.body.id_e,
                           release is not None, ctx.height, ctx.height + tau)
        self._next_id += 1
        self.cases[case.dispute_id] = case
        self._by_exchange[(host, cid, case.reqid)] = case.dispute_id
        self.peer(ctx, host).register_dispute(ctx, cid, case.dispute_id)

        if release is not None and reencrypts(release.release.k, chunk, cid, reqid, index,
                                              ack.body.id_e[index]):
            self._judge_content(ctx, case, content.id_c[index])
        else:
            ctx.ledger.schedule_call(case.deadline, self.name, "timeout", dispute_id=case.dispute_id)
        self._snapshot(ctx, case.dispute_id, case)
        return {"dispute_id": case.dispute_id, "status": case.status, "deadline": case.deadline}

    def op_submit_key(self, ctx: CallContext, dispute_id: int, m5: bytes) -> str:
        case = self._get(dispute_id)
        if ctx.submitter != case.facilitator_pk:
            raise ContractError("only the facilitator may submit the key")
        if case.terminal:
            raise ContractError("dispute already resolved")
        if ctx.height >= case.deadline:
            raise ContractError("key submitted after the deadline")
        try:
            release = decode(m5, M5)
        except WireError as exc:
            raise ContractError(f"malformed key release: {exc}") from None
        if not release.valid(case.facilitator_pk):
            raise ContractError("key release signature invalid")
        if (release.release.cid, release.release.reqid.hex()) != (case.cid, case.reqid):
            raise ContractError("key release bound to another request")
        content = self.peer(ctx, "registry").lookup(case.vid)
        if reencrypts(release.release.k, case.chunk, case.cid, release.release.reqid, case.index,
                      case.id_e[case.index]):
            self._judge_content(ctx, case, content.id_c[case.index])
        else:
            self._resolve(ctx, case, BUYER_REFUNDED)
        self._snapshot(ctx, case.dispute_id, case)
        return case.status

    def op_timeout(self, ctx: CallContext, dispute_id: int) -> str:
        case = self._get(dispute_id)
        if not ctx.system:
            raise ContractError("timeouts are triggered by the ledger")
        if case.terminal:
            return case.status
        if ctx.height < case.deadline:
            raise ContractError("deadline not reached")
        self._resolve(ctx, case, BUYER_REFUNDED)
        self._snapshot(ctx, case.dispute_id, case)
        return case.status

    def _judge_content(self, ctx: CallContext, case: DisputeCase, registered: bytes) -> None:
        if crypto.hash(case.chunk) == registered:
            self._resolve(ctx, case, BUYER_CHEATED)
        else:
            self._resolve(ctx, case, FACILITATOR_CHEATED)

    def _resolve(self, ctx: CallContext, case: DisputeCase, status: str) -> None:
        case.status = status
        case.resolved_at = ctx.height
        self.peer(ctx, case.host).on_dispute_resolved(ctx, case)

    def _get(self, dispute_id: int) -> DisputeCase:
        try:
            return self.cases[dispute_id]
        except KeyError:
            raise ContractError(f"unknown dispute {dispute_id}") from None

    def dump(self) -> dict[str, Any]:
        return {"disputes": [self.cases[d].to_dict() for d in sorted(self.cases)]}

"""Conditional escrow: funds locked until a timeout, releasable early only on evidence.

Two condition kinds exist. ``owner-signed-iou`` releases against IOUs the
owner signed. ``arbiter:<contract>`` hands release decisions to another
contract; such escrows have no fixed timeout until the arbiter sets one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Sequence

from .. import crypto
from ..ledger import CallContext, ContractError
from ..wire import IOU, DepositAuth, decode, encode
from .base import BaseContract

OWNER_SIGNED = "owner-signed-iou"


def arbiter(name: str) -> str:
    return "arbiter:" + name


@dataclass
class Escrow:
    escrow_id: int
    owner_pk: bytes
    balance: int
    timeout: int | None
    condition: str
    opened_at: int
    closed: bool = False

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["owner_pk"] = self.owner_pk.hex()
        return d


def deposit_sig(keypair: crypto.KeyPair, amount: int) -> bytes:
    return keypair.sign(encode(DepositAuth(amount)))


class EscrowContract(BaseContract):
    name = "escrow"
    OPS = ("open_escrow", "process_iou", "close_escrow")

    def __init__(self) -> None:
        super().__init__()
        self.escrows: dict[int, Escrow] = {}
        self._next_id = 1

    # -- validation shared with atomic multi-escrow opens ---------------------
    def check_open(self, ctx: CallContext, owner_pk: bytes, amount: int, sig: bytes) -> None:
        if amount <= 0:
            raise ContractError("escrow amount must be positive")
        if not crypto.verify(owner_pk, encode(DepositAuth(amount)), sig):
            raise ContractError("deposit signature does not verify")
        if ctx.ledger.balance(owner_pk) < amount:
            raise ContractError("insufficient ledger balance")

    def open(self, ctx: CallContext, owner_pk: bytes, amount: int, sig: bytes,
             timeout: int | None, condition: str) -> int:
        self.check_open(ctx, owner_pk, amount, sig)
        ctx.ledger.debit(owner_pk, amount)
        e = Escrow(self._next_id, owner_pk, amount, timeout, condition, ctx.height)
        self._next_id += 1
        self.escrows[e.escrow_id] = e
        self._snapshot(ctx, e.escrow_id, e)
        return e.escrow_id

    def get(self, escrow_id: int) -> Escrow:
        try:
            return self.escrows[escrow_id]
        except KeyError:
            raise ContractError(f"unknown escrow {escrow_id}") from None

    def _live(self, escrow_id: int) -> Escrow:
        e = self.get(escrow_id)
        if e.closed:
            raise ContractError(f"escrow {escrow_id} is closed")
        return e

    def _authorised(self, e: Escrow, ious: Sequence[IOU], evidence: Any, caller: str | None) -> bool:
        if e.condition.startswith("arbiter:"):
            return caller is not None and e.condition == arbiter(caller)
        if e.condition == OWNER_SIGNED:
            if not isinstance(evidence, list) or len(evidence) != len(ious):
                return False
            return all(
                iou.from_pk == e.owner_pk and crypto.verify(e.owner_pk, encode(iou), sig)
                for iou, sig in zip(ious, evidence)
            )
        return False

    def process_iou(self, ctx: CallContext, escrow_id: int, ious: Sequence[IOU], evidence: Any,
                    caller: str | None = None) -> list[dict[str, Any]]:
        """Pay each IOU from the escrow in order; stops at the first overdraw."""
        e = self._live(escrow_id)
        if e.timeout is not None and ctx.height > e.timeout:
            raise ContractError(f"escrow {escrow_id} expired at height {e.timeout}")
        if not self._authorised(e, ious, evidence, caller):
            raise ContractError(f"escrow {escrow_id} condition not satisfied")
        results = []
        for iou in ious:
            if iou.amount > e.balance:
                results.append({"to": iou.to_pk.hex(), "amount": iou.amount, "paid": False})
                self._snapshot(ctx, e.escrow_id, e)
                if caller is None:
                    raise ContractError(f"escrow {escrow_id} overdraw after {len(results) - 1} payouts")
                break
            e.balance -= iou.amount
            ctx.ledger.credit(iou.to_pk, iou.amount)
            results.append({"to": iou.to_pk.hex(), "amount": iou.amount, "paid": True})
        self._snapshot(ctx, e.escrow_id, e)
        return results

    def transfer(self, ctx: CallContext, src: int, dst: int, amount: int, caller: str) -> int:
        """Move up to ``amount`` between escrows; returns what actually moved."""
        a, b = self._live(src), self._live(dst)
        if a.condition != arbiter(caller) or b.condition != arbiter(caller):
            raise ContractError("escrow transfer requires the arbiter of both escrows")
        moved = min(amount, a.balance)
        a.balance -= moved
        b.balance += moved
        self._snapshot(ctx, a.escrow_id, a)
        self._snapshot(ctx, b.escrow_id, b)
        return moved

    def set_timeout(self, ctx: CallContext, escrow_id: int, height: int, caller: str) -> None:
        e = self._live(escrow_id)
        if e.condition != arbiter(caller):
            raise ContractError("only the arbiter may fix the timeout")
        e.timeout = height
        self._snapshot(ctx, e.escrow_id, e)

    def close(self, ctx: CallContext, escrow_id: int) -> int:
        e = self._live(escrow_id)
        if e.timeout is None or ctx.height < e.timeout:
            raise ContractError(f"escrow {escrow_id} cannot close before its timeout")
        refund, e.balance, e.closed = e.balance, 0, True
        ctx.ledger.credit(e.owner_pk, refund)
        self._snapshot(ctx, e.escrow_id, e)
        return refund

    # -- transaction entry points ------------------------------------------------
    def op_open_escrow(self, ctx, owner_pk, amount, sig, timeout, condition=OWNER_SIGNED):
        if condition != OWNER_SIGNED:
            raise ContractError("directly opened escrows must use the owner-signed condition")
        if ctx.submitter != owner_pk and not ctx.system:
            raise ContractError("escrow must be opened by its owner")
        return self.open(ctx, owner_pk, amount, sig, timeout, condition)

    def op_process_iou(self, ctx, escrow_id, ious, evidence):
        decoded = [decode(raw, IOU) for raw in ious]
        return self.process_iou(ctx, escrow_id, decoded, evidence)

    def op_close_escrow(self, ctx, escrow_id):
        return self.close(ctx, escrow_id)

    def held(self) -> int:
        return sum(e.balance for e in self.escrows.values())

    def dump(self) -> dict[str, Any]:
        return {"escrows": [self.escrows[k].to_dict() for k in sorted(self.escrows)]}

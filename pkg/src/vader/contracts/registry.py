"""Content registry: stores <id_C, royalty %, owner, facilitator> under vid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .. import crypto
from ..ledger import CallContext, ContractError
from ..wire import Registration, RegistrationCounterSign, decode, encode
from .base import BaseContract


@dataclass
class ContentRecord:
    vid: bytes
    id_c: tuple[bytes, ...]
    amt_o: int
    owner_pk: bytes
    facilitator_pk: bytes
    sig_o: bytes
    sig_f: bytes
    height: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "vid": self.vid.hex(),
            "id_c": [d.hex() for d in self.id_c],
            "amt_o": self.amt_o,
            "owner_pk": self.owner_pk.hex(),
            "facilitator_pk": self.facilitator_pk.hex(),
            "sig_o": self.sig_o.hex(),
            "sig_f": self.sig_f.hex(),
            "height": self.height,
        }


def owner_sign(m: Registration, owner: crypto.KeyPair) -> bytes:
    return owner.sign(encode(m))


def facilitator_sign(m: Registration, sig_o: bytes, facilitator: crypto.KeyPair) -> bytes:
    return facilitator.sign(encode(RegistrationCounterSign(m, sig_o)))


def royalty(price: int, amt_o: int) -> int:
    """Owner's cut in milli-units, rounded down."""
    return price * amt_o // 100


class RegistryContract(BaseContract):
    name = "registry"
    OPS = ("register_content",)

    def __init__(self) -> None:
        super().__init__()
        self.contents: dict[bytes, ContentRecord] = {}

    def lookup(self, vid: bytes) -> ContentRecord | None:
        return self.contents.get(vid)

    def op_register_content(self, ctx: CallContext, m: bytes, sig_o: bytes, sig_f: bytes) -> bytes:
        reg = decode(m, Registration)
        if not 0 <= reg.amt_o <= 100:
            raise ContractError("royalty percentage outside [0, 100]")
        if not reg.id_c:
            raise ContractError("content has no chunks")
        if not crypto.verify(reg.owner_pk, m, sig_o):
            raise ContractError("owner signature does not verify")
        if not crypto.verify(reg.facilitator_pk, encode(RegistrationCounterSign(reg, sig_o)), sig_f):
            raise ContractError("facilitator signature does not verify")
        vid = crypto.content_id(list(reg.id_c))
        existing = self.contents.get(vid)
        if existing is not None:
            same = (existing.id_c, existing.amt_o, existing.owner_pk, existing.facilitator_pk) == (
                reg.id_c, reg.amt_o, reg.owner_pk, reg.facilitator_pk)
            if same:
                return vid
            raise ContractError("vid already registered with different terms")
        rec = ContentRecord(vid, reg.id_c, reg.amt_o, reg.owner_pk, reg.facilitator_pk, sig_o, sig_f, ctx.height)
        self.contents[vid] = rec
        self._snapshot(ctx, vid, rec)
        return vid

    def dump(self) -> dict[str, Any]:
        return {"contents": [self.contents[v].to_dict() for v in sorted(self.contents)]}

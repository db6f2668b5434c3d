"""Protocol messages M0..M5, the IOU, and the helper payloads around them.

Each signature is computed over an ``encode()`` output:

========  ==========================================  ========
message   signed payload                              signer
========  ==========================================  ========
M0        encode(TradeTerms)                          buyer
M1        encode(CounterSign(terms, sig_b))           facilitator
M2        encode(AckBody)                             buyer
M3        encode(AckCounterSign(body, sig_b))         facilitator
M4        encode(IOU)                                 buyer
M5        encode(KeyRelease)                          facilitator
========  ==========================================  ========
"""

from __future__ import annotations

from dataclasses import dataclass

from .. import crypto
from .codec import Message, decode, encode, register


@register
@dataclass(frozen=True, order=True)
class ReqId(Message):
    counter: int
    nonce: int

    TAG = 0x01
    SCHEMA = {"counter": "u64", "nonce": "u64"}

    def hex(self) -> str:
        return f"{self.counter:016x}{self.nonce:016x}"


@register
@dataclass(frozen=True)
class TradeTerms(Message):
    cid: bytes
    reqid: ReqId
    vid: bytes
    price: int

    TAG = 0x02
    SCHEMA = {"cid": "cid", "reqid": ReqId, "vid": "digest", "price": "u64"}


@register
@dataclass(frozen=True)
class CounterSign(Message):
    terms: TradeTerms
    sig_b: bytes

    TAG = 0x03
    SCHEMA = {"terms": TradeTerms, "sig_b": "sig"}


@register
@dataclass(frozen=True)
class M0(Message):
    terms: TradeTerms
    sig_b: bytes

    TAG = 0x10
    SCHEMA = {"terms": TradeTerms, "sig_b": "sig"}

    @classmethod
    def create(cls, terms: TradeTerms, buyer: crypto.KeyPair) -> "M0":
        return cls(terms, buyer.sign(encode(terms)))

    def valid(self, buyer_pk: bytes) -> bool:
        return crypto.verify(buyer_pk, encode(self.terms), self.sig_b)


@register
@dataclass(frozen=True)
class M1(Message):
    terms: TradeTerms
    sig_b: bytes
    sig_f: bytes

    TAG = 0x11
    SCHEMA = {"terms": TradeTerms, "sig_b": "sig", "sig_f": "sig"}

    @classmethod
    def countersign(cls, m0: M0, facilitator: crypto.KeyPair) -> "M1":
        sig_f = facilitator.sign(encode(CounterSign(m0.terms, m0.sig_b)))
        return cls(m0.terms, m0.sig_b, sig_f)

    def valid(self, buyer_pk: bytes, facilitator_pk: bytes) -> bool:
        return crypto.verify(buyer_pk, encode(self.terms), self.sig_b) and crypto.verify(
            facilitator_pk, encode(CounterSign(self.terms, self.sig_b)), self.sig_f
        )


@register
@dataclass(frozen=True)
class AckBody(Message):
    cid: bytes
    reqid: ReqId
    id_e: tuple[bytes, ...]

    TAG = 0x04
    SCHEMA = {"cid": "cid", "reqid": ReqId, "id_e": ("list", "digest")}


@register
@dataclass(frozen=True)
class AckCounterSign(Message):
    body: AckBody
    sig_b: bytes

    TAG = 0x05
    SCHEMA = {"body": AckBody, "sig_b": "sig"}


@register
@dataclass(frozen=True)
class M2(Message):
    body: AckBody
    sig_b: bytes

    TAG = 0x12
    SCHEMA = {"body": AckBody, "sig_b": "sig"}

    @classmethod
    def create(cls, body: AckBody, buyer: crypto.KeyPair) -> "M2":
        return cls(body, buyer.sign(encode(body)))

    def valid(self, buyer_pk: bytes) -> bool:
        return crypto.verify(buyer_pk, encode(self.body), self.sig_b)


@register
@dataclass(frozen=True)
class M3(Message):
    body: AckBody
    sig_b: bytes
    sig_f: bytes

    TAG = 0x13
    SCHEMA = {"body": AckBody, "sig_b": "sig", "sig_f": "sig"}

    @classmethod
    def countersign(cls, m2: M2, facilitator: crypto.KeyPair) -> "M3":
        sig_f = facilitator.sign(encode(AckCounterSign(m2.body, m2.sig_b)))
        return cls(m2.body, m2.sig_b, sig_f)

    def valid(self, buyer_pk: bytes, facilitator_pk: bytes) -> bool:
        return crypto.verify(buyer_pk, encode(self.body), self.sig_b) and crypto.verify(
            facilitator_pk, encode(AckCounterSign(self.body, self.sig_b)), self.sig_f
        )


@register
@dataclass(frozen=True)
class IOU(Message):
    from_pk: bytes
    to_pk: bytes
    amount: int
    cid: bytes
    reqid: ReqId

    TAG = 0x06
    SCHEMA = {"from_pk": "pk", "to_pk": "pk", "amount": "u64", "cid": "cid", "reqid": ReqId}

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("IOU amount must be positive")
        if self.from_pk == self.to_pk:
            raise ValueError("IOU sender and receiver must differ")


@register
@dataclass(frozen=True)
class M4(Message):
    iou: IOU
    sig_b: bytes

    TAG = 0x14
    SCHEMA = {"iou": IOU, "sig_b": "sig"}

    @classmethod
    def create(cls, iou: IOU, buyer: crypto.KeyPair) -> "M4":
        return cls(iou, buyer.sign(encode(iou)))

    def valid(self, buyer_pk: bytes) -> bool:
        return crypto.verify(buyer_pk, encode(self.iou), self.sig_b)


@register
@dataclass(frozen=True)
class KeyRelease(Message):
    cid: bytes
    reqid: ReqId
    k: bytes

    TAG = 0x07
    SCHEMA = {"cid": "cid", "reqid": ReqId, "k": "key"}


@register
@dataclass(frozen=True)
class M5(Message):
    release: KeyRelease
    sig_f: bytes

    TAG = 0x15
    SCHEMA = {"release": KeyRelease, "sig_f": "sig"}

    @classmethod
    def create(cls, release: KeyRelease, facilitator: crypto.KeyPair) -> "M5":
        return cls(release, facilitator.sign(encode(release)))

    def valid(self, facilitator_pk: bytes) -> bool:
        return crypto.verify(facilitator_pk, encode(self.release), self.sig_f)


@register
@dataclass(frozen=True)
class DepositAuth(Message):
    """What a party signs to lock ``amount`` in an escrow."""

    amount: int

    TAG = 0x08
    SCHEMA = {"amount": "u64"}


@register
@dataclass(frozen=True)
class Registration(Message):
    """m = <id_C, amt_O, pk_O, pk_F> from content registration."""

    id_c: tuple[bytes, ...]
    amt_o: int
    owner_pk: bytes
    facilitator_pk: bytes

    TAG = 0x09
    SCHEMA = {
        "id_c": ("list", "digest"),
        "amt_o": "u64",
        "owner_pk": "pk",
        "facilitator_pk": "pk",
    }


@register
@dataclass(frozen=True)
class RegistrationCounterSign(Message):
    m: Registration
    sig_o: bytes

    TAG = 0x0A
    SCHEMA = {"m": Registration, "sig_o": "sig"}


@register
@dataclass(frozen=True)
class EncryptedContent(Message):
    """Bulk <E, id_E>; travels unsigned outside the channel log."""

    cid: bytes
    reqid: ReqId
    chunks: tuple[bytes, ...]
    id_e: tuple[bytes, ...]

    TAG = 0x20
    SCHEMA = {"cid": "cid", "reqid": ReqId, "chunks": ("list", "bytes"), "id_e": ("list", "digest")}


@register
@dataclass(frozen=True)
class RetransmitRequest(Message):
    cid: bytes
    reqid: ReqId
    indices: tuple[int, ...]

    TAG = 0x21
    SCHEMA = {"cid": "cid", "reqid": ReqId, "indices": ("list", "u64")}


@register
@dataclass(frozen=True)
class Retransmission(Message):
    cid: bytes
    reqid: ReqId
    indices: tuple[int, ...]
    chunks: tuple[bytes, ...]

    TAG = 0x22
    SCHEMA = {"cid": "cid", "reqid": ReqId, "indices": ("list", "u64"), "chunks": ("list", "bytes")}


@register
@dataclass(frozen=True)
class Close(Message):
    cid: bytes
    reason: bytes

    TAG = 0x23
    SCHEMA = {"cid": "cid", "reason": "bytes"}


@register
@dataclass(frozen=True)
class DepositGrant(Message):
    """Buyer's signed DepositAuth for the per-exchange escrow of the on-chain baseline."""

    cid: bytes
    reqid: ReqId
    amount: int
    sig_b: bytes

    TAG = 0x24
    SCHEMA = {"cid": "cid", "reqid": ReqId, "amount": "u64", "sig_b": "sig"}


@register
@dataclass(frozen=True)
class PlainContent(Message):
    """Unencrypted chunks for the ledger-free baseline."""

    cid: bytes
    reqid: ReqId
    chunks: tuple[bytes, ...]

    TAG = 0x25
    SCHEMA = {"cid": "cid", "reqid": ReqId, "chunks": ("list", "bytes")}


def chunk_ad(cid: bytes, reqid: ReqId, index: int) -> bytes:
    """Associated data binding a ciphertext chunk to its position."""
    return b"vader/chunk" + cid + encode(reqid) + index.to_bytes(8, "big")


CHANNEL_SLOTS = (M0, M1, M2, M3, M4, M5)

__all__ = [
    "ReqId",
    "TradeTerms",
    "CounterSign",
    "M0",
    "M1",
    "AckBody",
    "AckCounterSign",
    "M2",
    "M3",
    "IOU",
    "M4",
    "KeyRelease",
    "M5",
    "DepositAuth",
    "Registration",
    "RegistrationCounterSign",
    "EncryptedContent",
    "RetransmitRequest",
    "Retransmission",
    "Close",
    "DepositGrant",
    "PlainContent",
    "chunk_ad",
    "encode",
    "decode",
    "CHANNEL_SLOTS",
]

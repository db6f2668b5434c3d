"""Hash, signature and symmetric-encryption primitives.

Everything here is deterministic given its inputs. Keys are derived from
integer seeds so a whole simulation replays bit-exactly.

Encryption is AES-256-GCM with the nonce derived from ``HMAC(k, ad)``. That
makes ``enc`` a pure function of ``(k, chunk, ad)``, which the dispute
contract relies on when it re-encrypts a disputed chunk and compares hashes.
Reusing a nonce only happens for identical ``(k, ad)``, and ``ad`` carries the
channel id, request id and chunk index.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

DIGEST_SIZE = 32
KEY_SIZE = 32
PK_SIZE = 32
SIG_SIZE = 64
TAG_SIZE = 16

Digest = bytes
Signature = bytes


class DecryptionError(Exception):
    """Authenticated decryption failed (wrong key, wrong ad or tampered data)."""


@dataclass(frozen=True)
class KeyPair:
    pk: bytes
    sk: bytes

    def sign(self, msg: bytes) -> Signature:
        return sign(self.sk, msg)


def hash(data: bytes) -> Digest:  # noqa: A001 - mirrors the protocol's H
    return hashlib.sha256(data).digest()


def content_id(chunk_digests: list[Digest]) -> Digest:
    """vid = H(H(c1) | H(c2) | ... | H(cn))."""
    return hash(b"".join(chunk_digests))


def _seed_bytes(label: bytes, seed: int) -> bytes:
    return hashlib.sha256(label + (seed & (2**64 - 1)).to_bytes(8, "big")).digest()


@lru_cache(maxsize=4096)
def _private_key(sk: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(sk)


@lru_cache(maxsize=4096)
def _public_key(pk: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(pk)


def keygen(seed: int) -> KeyPair:
    sk = _seed_bytes(b"vader/keygen", seed)
    pk = _private_key(sk).public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return KeyPair(pk=pk, sk=sk)


def sign(sk: bytes, msg: bytes) -> Signature:
    return _private_key(sk).sign(msg)


def verify(pk: bytes, msg: bytes, sig: bytes) -> bool:
    if len(sig) != SIG_SIZE or len(pk) != PK_SIZE:
        return False
    try:
        _public_key(pk).verify(sig, msg)
    except (InvalidSignature, ValueError):
        return False
    return True


def sym_gen(seed: int) -> bytes:
    return _seed_bytes(b"vader/symkey", seed)


def _nonce(k: bytes, ad: bytes) -> bytes:
    return hmac.new(k, b"vader/nonce" + ad, hashlib.sha256).digest()[:12]


def enc(k: bytes, chunk: bytes, ad: bytes) -> bytes:
    if len(k) != KEY_SIZE:
        raise ValueError(f"symmetric key must be {KEY_SIZE} bytes")
    return AESGCM(k).encrypt(_nonce(k, ad), chunk, ad)


def dec(k: bytes, ciphertext: bytes, ad: bytes) -> bytes:
    if len(k) != KEY_SIZE:
        raise DecryptionError("bad key length")
    try:
        return AESGCM(k).decrypt(_nonce(k, ad), ciphertext, ad)
    except InvalidTag as exc:
        raise DecryptionError("authentication tag mismatch") from exc


def ciphertext_len(plaintext_len: int) -> int:
    return plaintext_len + TAG_SIZE

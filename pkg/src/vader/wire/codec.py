"""Canonical byte encoding.

Every signed payload in the system is the output of :func:`encode`. Layout is
fixed: a one-byte message tag, then the fields in declaration order. Integers
are big-endian fixed width, fixed-size byte fields are written raw, lists and
variable byte strings carry a 4-byte big-endian length prefix. See
``docs/wire-format.md`` for the offset table.
"""

from __future__ import annotations

import struct
from dataclasses import fields, is_dataclass
from typing import Any, ClassVar

U32 = struct.Struct(">I")
U64 = struct.Struct(">Q")
I64 = struct.Struct(">q")

# fixed widths for raw byte fields
WIDTHS = {"cid": 16, "digest": 32, "pk": 32, "sig": 64, "key": 32}


class WireError(ValueError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


class Message:
    """Base for wire messages. Subclasses are frozen dataclasses with a
    ``TAG`` and a ``SCHEMA`` mapping field name -> kind."""

    TAG: ClassVar[int]
    SCHEMA: ClassVar[dict[str, Any]]

    def encode(self) -> bytes:
        return encode(self)


REGISTRY: dict[int, type[Message]] = {}


def register(cls):
    if cls.TAG in REGISTRY:
        raise RuntimeError(f"duplicate wire tag {cls.TAG:#x}")
    assert is_dataclass(cls)
    names = [f.name for f in fields(cls)]
    if names != list(cls.SCHEMA):
        raise RuntimeError(f"{cls.__name__}: schema order must match dataclass fields")
    REGISTRY[cls.TAG] = cls
    return cls


def _write(kind: Any, value: Any, out: list[bytes], name: str) -> None:
    if isinstance(kind, type) and issubclass(kind, Message):
        if not isinstance(value, kind):
            raise WireError(name, f"expected {kind.__name__}")
        _write_body(value, out)
    elif kind == "u64":
        if not isinstance(value, int) or not 0 <= value < 2**64:
            raise WireError(name, "u64 out of range")
        out.append(U64.pack(value))
    elif kind in WIDTHS:
        if not isinstance(value, (bytes, bytearray)) or len(value) != WIDTHS[kind]:
            raise WireError(name, f"expected {WIDTHS[kind]} bytes")
        out.append(bytes(value))
    elif kind == "bytes":
        out.append(U32.pack(len(value)))
        out.append(bytes(value))
    elif kind == "opt_key":
        if value is None:
            out.append(b"\x00")
        else:
            out.append(b"\x01")
            _write("key", value, out, name)
    elif isinstance(kind, tuple) and kind[0] == "list":
        out.append(U32.pack(len(value)))
        for i, item in enumerate(value):
            _write(kind[1], item, out, f"{name}[{i}]")
    else:  # pragma: no cover - schema bug
        raise RuntimeError(f"unknown kind {kind!r}")


def _write_body(msg: Message, out: list[bytes]) -> None:
    for name, kind in msg.SCHEMA.items():
        _write(kind, getattr(msg, name), out, f"{type(msg).__name__}.{name}")


def encode(msg: Message) -> bytes:
    out = [bytes([msg.TAG])]
    _write_body(msg, out)
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int, name: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise WireError(name, f"truncated (need {n} bytes at offset {self.pos})")
        chunk = bytes(self.buf[self.pos : self.pos + n])
        self.pos += n
        return chunk


def _read(kind: Any, r: _Reader, name: str) -> Any:
    if isinstance(kind, type) and issubclass(kind, Message):
        return _read_body(kind, r)
    if kind == "u64":
        return U64.unpack(r.take(8, name))[0]
    if kind in WIDTHS:
        return r.take(WIDTHS[kind], name)
    if kind == "bytes":
        n = U32.unpack(r.take(4, name))[0]
        return r.take(n, name)
    if kind == "opt_key":
        flag = r.take(1, name)[0]
        if flag == 0:
            return None
        if flag != 1:
            raise WireError(name, f"bad option flag {flag}")
        return r.take(WIDTHS["key"], name)
    if isinstance(kind, tuple) and kind[0] == "list":
        n = U32.unpack(r.take(4, name))[0]
        if n > len(r.buf):
            raise WireError(name, f"list length {n} exceeds buffer")
        return tuple(_read(kind[1], r, f"{name}[{i}]") for i in range(n))
    raise RuntimeError(f"unknown kind {kind!r}")  # pragma: no cover


def _read_body(cls: type[Message], r: _Reader) -> Message:
    values = {
        name: _read(kind, r, f"{cls.__name__}.{name}") for name, kind in cls.SCHEMA.items()
    }
    try:
        return cls(**values)
    except ValueError as exc:
        raise WireError(cls.__name__, str(exc)) from exc


def decode(buf: bytes, expect: type[Message] | None = None) -> Message:
    r = _Reader(buf)
    tag = r.take(1, "tag")[0]
    cls = REGISTRY.get(tag)
    if cls is None:
        raise WireError("tag", f"unknown message tag {tag:#x}")
    if expect is not None and cls is not expect:
        raise WireError("tag", f"expected {expect.__name__}, got {cls.__name__}")
    msg = _read_body(cls, r)
    if r.pos != len(r.buf):
        raise WireError(cls.__name__, f"{len(r.buf) - r.pos} trailing bytes")
    return msg


# ---------------------------------------------------------------------------
# generic values (ledger transaction arguments)

_T_NONE, _T_FALSE, _T_TRUE, _T_INT, _T_BYTES, _T_STR, _T_LIST, _T_DICT, _T_MSG = range(9)


def encode_value(value: Any) -> bytes:
    out: list[bytes] = []
    _write_value(value, out)
    return b"".join(out)


def _write_value(v: Any, out: list[bytes]) -> None:
    if v is None:
        out.append(bytes([_T_NONE]))
    elif v is True:
        out.append(bytes([_T_TRUE]))
    elif v is False:
        out.append(bytes([_T_FALSE]))
    elif isinstance(v, int):
        out.append(bytes([_T_INT]) + I64.pack(v))
    elif isinstance(v, (bytes, bytearray)):
        out.append(bytes([_T_BYTES]) + U32.pack(len(v)) + bytes(v))
    elif isinstance(v, str):
        raw = v.encode("utf-8")
        out.append(bytes([_T_STR]) + U32.pack(len(raw)) + raw)
    elif isinstance(v, (list, tuple)):
        out.append(bytes([_T_LIST]) + U32.pack(len(v)))
        for item in v:
            _write_value(item, out)
    elif isinstance(v, dict):
        out.append(bytes([_T_DICT]) + U32.pack(len(v)))
        for key in sorted(v):
            if not isinstance(key, str):
                raise WireError("dict", "keys must be str")
            _write_value(key, out)
            _write_value(v[key], out)
    elif isinstance(v, Message):
        raw = encode(v)
        out.append(bytes([_T_MSG]) + U32.pack(len(raw)) + raw)
    else:
        raise WireError("value", f"cannot encode {type(v).__name__}")


def decode_value(buf: bytes) -> Any:
    r = _Reader(buf)
    value = _read_value(r)
    if r.pos != len(r.buf):
        raise WireError("value", "trailing bytes")
    return value


def _read_value(r: _Reader) -> Any:
    t = r.take(1, "value.type")[0]
    if t == _T_NONE:
        return None
    if t == _T_TRUE:
        return True
    if t == _T_FALSE:
        return False
    if t == _T_INT:
        return I64.unpack(r.take(8, "value.int"))[0]
    if t in (_T_BYTES, _T_STR, _T_MSG):
        n = U32.unpack(r.take(4, "value.len"))[0]
        raw = r.take(n, "value.data")
        if t == _T_BYTES:
            return raw
        if t == _T_STR:
            return raw.decode("utf-8")
        return decode(raw)
    if t == _T_LIST:
        n = U32.unpack(r.take(4, "value.len"))[0]
        return [_read_value(r) for _ in range(n)]
    if t == _T_DICT:
        n = U32.unpack(r.take(4, "value.len"))[0]
        out = {}
        for _ in range(n):
            key = _read_value(r)
            out[key] = _read_value(r)
        return out
    raise WireError("value.type", f"unknown type byte {t}")

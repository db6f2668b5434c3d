"""Print the byte layout of every registered wire message as a markdown table.

    python scripts/wire_table.py > docs/wire-format.md
"""

from __future__ import annotations

from vader.wire.codec import REGISTRY, WIDTHS, Message

HEADER = """# Wire format

Every signed payload is the canonical encoding of one message: a one-byte tag,
then the fields in the order listed. Integers are unsigned 64-bit big-endian.
Raw byte fields have the fixed widths shown. `list` and `bytes` fields carry a
4-byte big-endian length prefix (element count or byte count). An optional key
is a flag byte (0 absent, 1 present) followed by 32 key bytes when present.
Nested messages are inlined without their own tag.

Offsets are from the start of the encoding, tag included. Once a field has
variable length, later offsets are written relative to the end of that field,
e.g. `end(id_e)+0`. Decoding rejects unknown tags, truncation and trailing bytes.

Ciphertext chunks are AES-256-GCM with associated data
`b"vader/chunk" || cid (16) || encode(ReqId) (17) || index (u64)` and nonce
`HMAC-SHA256(k, b"vader/nonce" || ad)[:12]`, so re-encrypting a chunk under the
same key and position reproduces it byte for byte.

Regenerate with `python scripts/wire_table.py > docs/wire-format.md`.
"""


def _kind_name(kind) -> str:
    if isinstance(kind, tuple):
        return f"list<{_kind_name(kind[1])}>"
    if isinstance(kind, type):
        return kind.__name__
    return kind


def _rows(cls: type[Message], prefix: str, base: str, offset: int):
    """Yield (field, offset, width, kind) and return the trailing (base, offset)."""
    for name, kind in cls.SCHEMA.items():
        path = f"{prefix}{name}"
        at = str(offset) if base == "" else f"{base}+{offset}"
        if isinstance(kind, type) and issubclass(kind, Message):
            base, offset = yield from _rows(kind, f"{path}.", base, offset)
            continue
        if kind == "u64":
            width: int | str = 8
        elif kind in WIDTHS:
            width = WIDTHS[kind]
        elif kind == "opt_key":
            width = "1 or 33"
        else:
            width = "4 + var"
        yield path, at, width, _kind_name(kind)
        if isinstance(width, int):
            offset += width
        else:
            base, offset = f"end({path})", 0
    return base, offset


def table(cls: type[Message]) -> str:
    lines = [f"## {cls.__name__} (tag `0x{cls.TAG:02x}`)", "", "| field | offset | width | kind |",
             "|---|---|---|---|", "| tag | 0 | 1 | u8 |"]
    gen = _rows(cls, "", "", 1)
    while True:
        try:
            path, at, width, kind = next(gen)
        except StopIteration as stop:
            base, offset = stop.value
            break
        lines.append(f"| {path} | {at} | {width} | {kind} |")
    total = offset if base == "" else f"{base}+{offset}"
    lines += ["", f"Total length: {total} bytes.", ""]
    return "\n".join(lines)


def render() -> str:
    return HEADER + "\n" + "\n".join(table(REGISTRY[tag]) for tag in sorted(REGISTRY))


if __name__ == "__main__":
    print(render(), end="")

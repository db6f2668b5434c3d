from __future__ import annotations

import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vader import crypto
from vader.sim.kernel import TIMEOUT, Simulator
from vader.wire import (CLOSED, IOU, M0, M1, M2, M3, M4, M5, AckBody, ChannelClosed, KeyRelease, Registration,
                        ReqId, TradeTerms, WireError, connect, decode, decode_value, encode, encode_value)
from vader.wire.messages import EncryptedContent

CID = bytes(range(16))
B, F = crypto.keygen(1), crypto.keygen(2)

u64 = st.integers(0, 2**64 - 1)
digests = st.binary(min_size=32, max_size=32)
cids = st.binary(min_size=16, max_size=16)


@st.composite
def terms(draw):
    return TradeTerms(draw(cids), ReqId(draw(u64), draw(u64)), draw(digests), draw(u64))


def test_trade_terms_layout_by_hand():
    vid = crypto.hash(b"abc")
    t = TradeTerms(CID, ReqId(1, 2), vid, 10_000)
    expected = b"\x02" + CID + struct.pack(">QQ", 1, 2) + vid + struct.pack(">Q", 10_000)
    assert encode(t) == expected
    assert len(expected) == 1 + 16 + 16 + 32 + 8


def test_list_is_length_prefixed():
    body = AckBody(CID, ReqId(3, 4), (b"\x11" * 32, b"\x22" * 32))
    raw = encode(body)
    assert raw[:1] == b"\x04"
    assert raw[1 + 16 + 16:1 + 16 + 16 + 4] == struct.pack(">I", 2)
    assert len(raw) == 1 + 16 + 16 + 4 + 64


@given(terms())
def test_m0_m1_roundtrip_and_signatures(t):
    m0 = M0.create(t, B)
    assert decode(encode(m0)) == m0
    assert m0.valid(B.pk)
    m1 = M1.countersign(m0, F)
    assert decode(encode(m1), M1) == m1
    assert m1.valid(B.pk, F.pk)
    assert not m1.valid(F.pk, B.pk)


def test_equal_messages_encode_identically():
    a = TradeTerms(CID, ReqId(1, 2), b"\x00" * 32, 5)
    b = TradeTerms(bytes(CID), ReqId(1, 2), bytes(32), 5)
    assert encode(a) == encode(b)


@given(terms(), st.sampled_from(["cid", "reqid", "vid", "price"]), st.data())
def test_mutating_any_field_breaks_signature(t, name, data):
    m1 = M1.countersign(M0.create(t, B), F)
    if name == "cid":
        new = bytes(x ^ 0xFF for x in t.cid)
    elif name == "vid":
        new = bytes(x ^ 0x01 for x in t.vid)
    elif name == "reqid":
        new = ReqId(t.reqid.counter ^ 1, t.reqid.nonce)
    else:
        new = t.price ^ data.draw(st.integers(1, 2**32))
    forged = M1(TradeTerms(**{**t.__dict__, name: new}), m1.sig_b, m1.sig_f)
    assert not forged.valid(B.pk, F.pk)


def test_other_messages_roundtrip():
    rid = ReqId(9, 77)
    k = crypto.sym_gen(3)
    body = AckBody(CID, rid, (crypto.hash(b"e0"), crypto.hash(b"e1")))
    m3 = M3.countersign(M2.create(body, B), F)
    m4 = M4.create(IOU(B.pk, F.pk, 100, CID, rid), B)
    m5 = M5.create(KeyRelease(CID, rid, k), F)
    reg = Registration((crypto.hash(b"c"),), 30, B.pk, F.pk)
    ec = EncryptedContent(CID, rid, (b"xx", b""), body.id_e)
    for msg in (m3, m4, m5, reg, ec, rid):
        assert decode(encode(msg)) == msg
    assert m3.valid(B.pk, F.pk) and m4.valid(B.pk) and m5.valid(F.pk)


def test_iou_invariants():
    with pytest.raises(ValueError):
        IOU(B.pk, F.pk, 0, CID, ReqId(1, 1))
    with pytest.raises(ValueError):
        IOU(B.pk, B.pk, 5, CID, ReqId(1, 1))


def test_truncated_buffer_names_field():
    raw = encode(M0.create(TradeTerms(CID, ReqId(1, 2), bytes(32), 5), B))
    for cut in (0, 1, 10, 40, len(raw) - 1):
        with pytest.raises(WireError) as info:
            decode(raw[:cut])
        assert info.value.field


def test_decode_rejects_unknown_tag_and_trailing_bytes():
    raw = encode(ReqId(1, 2))
    with pytest.raises(WireError, match="tag"):
        decode(b"\xee" + raw[1:])
    with pytest.raises(WireError, match="trailing"):
        decode(raw + b"\x00")
    with pytest.raises(WireError):
        decode(raw, M0)


@given(st.binary(max_size=200))
def test_decode_never_crashes_on_garbage(buf):
    try:
        decode(buf)
    except WireError:
        pass


values = st.recursive(
    st.none() | st.booleans() | st.integers(-(2**63), 2**63 - 1) | st.binary(max_size=20) | st.text(max_size=10),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=5), inner, max_size=4),
    max_leaves=10,
)


@given(values)
def test_value_codec_roundtrip(v):
    assert decode_value(encode_value(v)) == v


# -- transport -----------------------------------------------------------------

def _pair(latency=10, bw=8_000_000):
    sim = Simulator()
    a, b = connect(sim, CID, "B", "F", latency, bw)
    return sim, a, b


def test_send_arrives_after_latency():
    sim, a, b = _pair()
    got = b.recv()
    a.send(ReqId(1, 1))
    sim.run()
    assert got.value == ReqId(1, 1)
    assert sim.now == 10


def test_recv_deadline_times_out():
    sim, a, b = _pair()
    got = b.recv(deadline=5)
    a.send(ReqId(1, 1))
    sim.run(until=5)
    assert got.value is TIMEOUT and sim.now == 5


def test_fifo_and_bulk_timing():
    sim, a, b = _pair()
    # 1000 bytes at 8 Mbit/s is 1 ms of serialization
    t1 = a.send(ReqId(1, 1), bulk_bytes=1000)
    t2 = a.send(ReqId(2, 2))
    assert t1 == 11 and t2 == 11
    got = []

    def reader():
        got.append((yield b.recv()))
        got.append((yield b.recv()))

    sim.spawn(reader())
    sim.run()
    assert got == [ReqId(1, 1), ReqId(2, 2)]


def test_close_signals_both_sides():
    sim, a, b = _pair()
    waiting = b.recv()
    a.close("done")
    sim.run()
    assert waiting.value is CLOSED
    assert b.closed and b.close_reason == "done"
    with pytest.raises(ChannelClosed):
        a.send(ReqId(1, 1))


def test_store_load_identical_bytes_and_jsonl():
    sim, a, _b = _pair()
    rid = ReqId(1, 5)
    m0 = M0.create(TradeTerms(CID, rid, bytes(32), 3), B)
    a.store(rid, m0)
    assert a.load(rid, M0) == m0
    assert a.load_raw(rid, M0) == encode(m0)
    assert a.load(rid, M1) is None
    assert a.export_jsonl().count("\n") == 1


def test_reqid_rules():
    _sim, a, b = _pair()
    seq = [a.next_reqid() for _ in range(3)]
    assert [r.counter for r in seq] == [1, 2, 3]
    assert all(b.check_reqid(r) for r in seq)
    assert not b.check_reqid(seq[1])
    _sim, _a, c = _pair()
    assert c.check_reqid(ReqId(7, 1))
    assert not c.check_reqid(ReqId(5, 2))


def _wire_table():
    import importlib.util
    from pathlib import Path

    root = Path(__file__).resolve().parents[1]
    spec = importlib.util.spec_from_file_location("wire_table", root / "scripts" / "wire_table.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return root, mod


def test_wire_doc_is_current():
    root, mod = _wire_table()
    assert (root / "docs" / "wire-format.md").read_text() == mod.render()


def test_wire_doc_lengths_match_encodings():
    _root, mod = _wire_table()
    t = TradeTerms(CID, ReqId(3, 4), crypto.hash(b"x"), 5)
    m1 = M1.countersign(M0.create(t, B), F)
    iou = IOU(B.pk, F.pk, 7, CID, ReqId(3, 4))
    m5 = M5.create(KeyRelease(CID, ReqId(3, 4), crypto.sym_gen(1)), F)
    for msg in (t, m1, iou, M4.create(iou, B), m5):
        assert f"Total length: {len(encode(msg))} bytes." in mod.table(type(msg))

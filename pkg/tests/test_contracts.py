from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from conftest import BOUNTY, TAU, exchange, fund, open_channel, register
from vader import crypto
from vader.contracts import (BUYER_CHEATED, BUYER_REFUNDED, FACILITATOR_CHEATED, deposit_sig, facilitator_sign,
                             owner_sign, royalty)
from vader.wire import IOU, M0, M1, Registration, ReqId, TradeTerms, encode

PLAIN = [b"chunk-zero", b"chunk-one", b"chunk-two"]


# -- escrow -------------------------------------------------------------------

def _open_escrow(chain, kp, amt, timeout, sig_amt=None):
    return chain.commit(kp.pk, "escrow", "open_escrow", owner_pk=kp.pk, amount=amt,
                        sig=deposit_sig(kp, amt if sig_amt is None else sig_amt), timeout=timeout)


def test_open_escrow(chain, parties):
    fund(chain, parties)
    r = _open_escrow(chain, parties.buyer, 100, 50)
    e = chain.contracts["escrow"].get(r.result)
    assert (e.balance, e.timeout) == (100, 50)
    assert chain.balance(parties.buyer.pk) == 9_900


def test_open_escrow_rejections(chain, parties):
    fund(chain, parties, 50)
    assert not _open_escrow(chain, parties.buyer, 10, 50, sig_amt=11).ok
    assert not _open_escrow(chain, parties.buyer, 0, 50).ok
    assert not _open_escrow(chain, parties.buyer, 100, 50).ok  # insufficient
    assert chain.balance(parties.buyer.pk) == 50


def _iou(p, amt, counter=1):
    return IOU(p.buyer.pk, p.facilitator.pk, amt, bytes(16), ReqId(counter, 0))


def _process(chain, p, eid, amounts):
    ious = [_iou(p, a, i + 1) for i, a in enumerate(amounts)]
    return chain.commit(p.facilitator.pk, "escrow", "process_iou", escrow_id=eid,
                        ious=[encode(i) for i in ious], evidence=[p.buyer.sign(encode(i)) for i in ious])


def test_process_iou_pays_in_order(chain, parties):
    fund(chain, parties)
    eid = _open_escrow(chain, parties.buyer, 100, 50).result
    assert _process(chain, parties, eid, [30, 20]).ok
    assert chain.contracts["escrow"].get(eid).balance == 50
    assert chain.balance(parties.facilitator.pk) == 10_050


def test_process_iou_after_timeout_is_noop(chain, parties):
    fund(chain, parties)
    eid = _open_escrow(chain, parties.buyer, 100, 2).result
    chain.advance_to(3)
    r = _process(chain, parties, eid, [30])
    assert not r.ok and "expired" in r.error
    assert chain.contracts["escrow"].get(eid).balance == 100


def test_process_iou_overdraw_stops_partway(chain, parties):
    fund(chain, parties)
    eid = _open_escrow(chain, parties.buyer, 40, 50).result
    r = _process(chain, parties, eid, [30, 20])
    assert not r.ok and "overdraw" in r.error
    assert chain.contracts["escrow"].get(eid).balance == 10
    assert chain.balance(parties.facilitator.pk) == 10_030


def test_process_iou_bad_evidence(chain, parties):
    fund(chain, parties)
    eid = _open_escrow(chain, parties.buyer, 100, 50).result
    iou = _iou(parties, 10)
    r = chain.commit(parties.facilitator.pk, "escrow", "process_iou", escrow_id=eid, ious=[encode(iou)],
                     evidence=[parties.facilitator.sign(encode(iou))])
    assert not r.ok and chain.contracts["escrow"].get(eid).balance == 100


def test_close_escrow(chain, parties):
    fund(chain, parties)
    eid = _open_escrow(chain, parties.buyer, 50, 3).result
    assert not chain.commit(parties.buyer.pk, "escrow", "close_escrow", escrow_id=eid).ok
    chain.advance_to(3)
    r = chain.commit(parties.buyer.pk, "escrow", "close_escrow", escrow_id=eid)
    assert r.ok and r.result == 50
    assert chain.balance(parties.buyer.pk) == 10_000
    assert not chain.commit(parties.buyer.pk, "escrow", "close_escrow", escrow_id=eid).ok


@given(st.integers(1, 200), st.lists(st.integers(1, 80), max_size=6))
def test_sequential_iou_oracle(balance, amounts):
    """Replays the payout loop independently and compares."""
    from conftest import Chain, Parties
    from vader.contracts import deploy_all
    from vader.ledger import Ledger, LedgerConfig
    from vader.sim.kernel import Simulator

    sim = Simulator()
    ledger = Ledger(sim, LedgerConfig(1000))
    chain = Chain(sim, ledger, deploy_all(ledger, bounty=BOUNTY, tau=TAU))
    p = Parties(crypto.keygen(1), crypto.keygen(2), crypto.keygen(3))
    fund(chain, p, 1000)
    eid = _open_escrow(chain, p.buyer, balance, 50).result
    _process(chain, p, eid, amounts)

    left, paid = balance, 0
    for a in amounts:
        if a > left:
            break
        left -= a
        paid += a
    assert chain.contracts["escrow"].get(eid).balance == left
    assert chain.balance(p.facilitator.pk) == 1000 + paid
    assert ledger.total_money() == ledger.minted


# -- registry -------------------------------------------------------------------

def test_register_and_reregister(chain, parties):
    vid = register(chain, parties, PLAIN)
    assert vid == crypto.content_id([crypto.hash(c) for c in PLAIN])
    assert chain.contracts["registry"].lookup(vid).amt_o == 30
    assert register(chain, parties, PLAIN) == vid  # idempotent


def test_register_rejects_stale_owner_sig(chain, parties):
    m = Registration(tuple(crypto.hash(c) for c in PLAIN), 30, parties.owner.pk, parties.facilitator.pk)
    sig_o = owner_sign(m, parties.owner)
    tampered = Registration((crypto.hash(b"other"),) + m.id_c[1:], 30, parties.owner.pk, parties.facilitator.pk)
    r = chain.commit(parties.facilitator.pk, "registry", "register_content", m=encode(tampered), sig_o=sig_o,
                     sig_f=facilitator_sign(tampered, sig_o, parties.facilitator))
    assert not r.ok and "owner signature" in r.error


def test_register_conflicting_terms_rejected(chain, parties):
    register(chain, parties, PLAIN, amt_o=30)
    m = Registration(tuple(crypto.hash(c) for c in PLAIN), 40, parties.owner.pk, parties.facilitator.pk)
    sig_o = owner_sign(m, parties.owner)
    r = chain.commit(parties.facilitator.pk, "registry", "register_content", m=encode(m), sig_o=sig_o,
                     sig_f=facilitator_sign(m, sig_o, parties.facilitator))
    assert not r.ok


def test_registry_read_state_visibility(chain, parties):
    vid = register(chain, parties, PLAIN)
    h = chain.contracts["registry"].lookup(vid).height
    assert chain.ledger.read_state("registry", vid, height=h) is not None
    assert chain.ledger.read_state("registry", vid, height=h - 1) is None


# -- channel ----------------------------------------------------------------------

def test_channel_open(chain, parties):
    fund(chain, parties)
    cid = open_channel(chain, parties, 100, 1000, tau=200)
    rec = chain.contracts["channel"].get(cid)
    assert (rec.state, rec.timer_started) == ("Open", False)
    cid2 = open_channel(chain, parties, 100, 1000)
    assert cid2 != cid


def test_channel_open_is_atomic(chain, parties):
    fund(chain, parties)
    before = chain.balance(parties.buyer.pk)
    r = chain.commit(parties.buyer.pk, "channel", "channel_open", buyer_pk=parties.buyer.pk, b_amt=100,
                     sig_b=deposit_sig(parties.buyer, 100), facilitator_pk=parties.facilitator.pk, f_amt=100,
                     sig_f=deposit_sig(parties.facilitator, 100), tau=5)
    assert not r.ok and "bounty" in r.error
    r = chain.commit(parties.buyer.pk, "channel", "channel_open", buyer_pk=parties.buyer.pk, b_amt=100,
                     sig_b=deposit_sig(parties.buyer, 100), facilitator_pk=parties.facilitator.pk, f_amt=1000,
                     sig_f=deposit_sig(parties.facilitator, 999), tau=5)
    assert not r.ok
    assert chain.balance(parties.buyer.pk) == before


def _settle(chain, cid):
    rec = chain.contracts["channel"].get(cid)
    chain.advance_to(rec.deadline + 40)
    return rec


def test_close_queues_and_counterparty_adds(chain, parties):
    fund(chain, parties)
    vid = register(chain, parties, PLAIN)
    cid = open_channel(chain, parties)
    xs = [exchange(parties, cid, i, vid, 10, PLAIN) for i in range(1, 5)]
    r = chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[x.bundle() for x in xs[:3]])
    assert len(r.result["accepted"]) == 3
    rec = chain.contracts["channel"].get(cid)
    assert rec.state == "Closing" and rec.timer_started
    r2 = chain.commit(parties.facilitator.pk, "channel", "channel_close", cid=cid,
                      bundles=[xs[3].bundle(), xs[0].bundle()])
    assert len(r2.result["accepted"]) == 1
    assert r2.result["rejected"][0]["reason"] == "duplicate reqid"
    assert len(rec.queued) == 4


def test_close_ignores_bad_signature(chain, parties):
    fund(chain, parties)
    vid = register(chain, parties, PLAIN)
    cid = open_channel(chain, parties)
    x = exchange(parties, cid, 1, vid, 10, PLAIN)
    forged = x.bundle()
    forged["m1"] = encode(M1(x.m1.terms, x.m1.sig_b, parties.buyer.sign(b"junk")))
    r = chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[forged])
    assert r.ok and r.result["rejected"][0]["reason"] == "agreement signatures invalid"
    assert chain.contracts["channel"].get(cid).invalid


def test_close_after_deadline_fails(chain, parties):
    fund(chain, parties)
    cid = open_channel(chain, parties)
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[])
    rec = chain.contracts["channel"].get(cid)
    chain.advance_to(rec.deadline)
    r = chain.commit(parties.facilitator.pk, "channel", "channel_close", cid=cid, bundles=[])
    assert not r.ok


def test_settle_two_exchanges_with_royalty(chain, parties):
    fund(chain, parties)
    vid = register(chain, parties, PLAIN, amt_o=30)
    cid = open_channel(chain, parties, 1000, 2000)
    xs = [exchange(parties, cid, i, vid, 10_000 // 1000, PLAIN) for i in (1, 2)]
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[x.bundle() for x in xs])
    rec = _settle(chain, cid)
    assert rec.state == "Closed"
    # price 10 each at 30%: F nets 14, O gets 6
    assert chain.balance(parties.facilitator.pk) == 10_000 + 14
    assert chain.balance(parties.owner.pk) == 6
    assert chain.balance(parties.buyer.pk) == 10_000 - 20
    assert chain.ledger.total_money() == chain.ledger.minted


def test_settle_early_rejected_and_empty_is_refund(chain, parties):
    fund(chain, parties)
    cid = open_channel(chain, parties)
    assert not chain.commit(parties.buyer.pk, "channel", "channel_settle", cid=cid).ok
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[])
    _settle(chain, cid)
    assert chain.balance(parties.buyer.pk) == 10_000
    assert chain.balance(parties.facilitator.pk) == 10_000


def test_royalty_floor():
    assert royalty(10_000, 30) == 3_000
    assert royalty(7, 30) == 2
    assert royalty(1, 99) == 0
    assert royalty(5, 100) == 5


# -- disputes -----------------------------------------------------------------------

def _dispute(chain, p, cid, x, index, chunk, with_key=True):
    return chain.commit(p.buyer.pk, "dispute", "raise_dispute", host="channel", buyer_pk=p.buyer.pk,
                        facilitator_pk=p.facilitator.pk, m1=encode(x.m1), m3=encode(x.m3), m4=encode(x.m4),
                        m5=encode(x.m5) if with_key else None, index=index, chunk=chunk)


def _closing(chain, p, bundles=()):
    fund(chain, p)
    vid = register(chain, p, PLAIN)
    cid = open_channel(chain, p)
    return vid, cid


def test_wrong_chunk_is_facilitator_cheated(chain, parties):
    vid, cid = _closing(chain, parties)
    good = exchange(parties, cid, 1, vid, 10, PLAIN)
    bad = exchange(parties, cid, 2, vid, 10, PLAIN, sent=[b"garbage"] + PLAIN[1:])
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[good.bundle()])
    r = _dispute(chain, parties, cid, bad, 0, b"garbage")
    assert r.ok and r.result["status"] == FACILITATOR_CHEATED
    _settle(chain, cid)
    # paid for one, refunded the disputed one
    assert chain.balance(parties.buyer.pk) == 10_000 - 10
    rec = chain.contracts["channel"].get(cid)
    assert rec.refunds == {bad.m1.terms.reqid.hex(): 10}
    assert chain.ledger.total_money() == chain.ledger.minted


def test_false_dispute_is_buyer_cheated(chain, parties):
    vid, cid = _closing(chain, parties)
    x = exchange(parties, cid, 1, vid, 10, PLAIN)
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[])
    r = _dispute(chain, parties, cid, x, 1, PLAIN[1])
    assert r.result["status"] == BUYER_CHEATED
    _settle(chain, cid)
    assert chain.balance(parties.facilitator.pk) == 10_000 + 10 - royalty(10, 30)


def test_missing_key_times_out_to_refund(chain, parties):
    vid, cid = _closing(chain, parties)
    x = exchange(parties, cid, 1, vid, 10, PLAIN)
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[])
    r = _dispute(chain, parties, cid, x, 0, b"whatever", with_key=False)
    assert r.result["status"] == "AwaitingKey"
    assert r.result["deadline"] == r.height + TAU
    _settle(chain, cid)
    case = chain.contracts["dispute"].cases[r.result["dispute_id"]]
    assert case.status == BUYER_REFUNDED and case.resolved_at <= case.deadline + 1
    assert chain.balance(parties.buyer.pk) == 10_000


def _submit_key(chain, p, did, m5):
    return chain.commit(p.facilitator.pk, "dispute", "submit_key", dispute_id=did, m5=encode(m5))


def test_submit_key_outcomes(chain, parties):
    vid, cid = _closing(chain, parties)
    honest = exchange(parties, cid, 1, vid, 10, PLAIN)
    cheat = exchange(parties, cid, 2, vid, 10, PLAIN, sent=[b"junk"] + PLAIN[1:])
    wrongkey = exchange(parties, cid, 3, vid, 10, PLAIN)
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[])
    d1 = _dispute(chain, parties, cid, honest, 0, PLAIN[0], with_key=False).result["dispute_id"]
    d2 = _dispute(chain, parties, cid, cheat, 0, b"junk", with_key=False).result["dispute_id"]
    d3 = _dispute(chain, parties, cid, wrongkey, 0, PLAIN[0], with_key=False).result["dispute_id"]
    assert _submit_key(chain, parties, d1, honest.m5).result == BUYER_CHEATED
    assert _submit_key(chain, parties, d2, cheat.m5).result == FACILITATOR_CHEATED
    # a validly signed key that does not reproduce the ciphertext hash
    other = exchange(parties, cid, 3, vid, 10, PLAIN, key_seed=555)
    assert _submit_key(chain, parties, d3, other.m5).result == BUYER_REFUNDED


def test_late_or_wrong_signer_key_ignored(chain, parties):
    vid, cid = _closing(chain, parties)
    x = exchange(parties, cid, 1, vid, 10, PLAIN)
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[])
    r = _dispute(chain, parties, cid, x, 0, PLAIN[0], with_key=False)
    did = r.result["dispute_id"]
    wrong = chain.commit(parties.buyer.pk, "dispute", "submit_key", dispute_id=did, m5=encode(x.m5))
    assert not wrong.ok
    chain.advance_to(r.height + TAU)
    assert not _submit_key(chain, parties, did, x.m5).ok


def test_dispute_requires_closing_channel_and_valid_evidence(chain, parties):
    vid, cid = _closing(chain, parties)
    x = exchange(parties, cid, 1, vid, 10, PLAIN)
    assert "closing" in _dispute(chain, parties, cid, x, 0, PLAIN[0]).error
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[])
    forged = exchange(parties, cid, 1, vid, 10, PLAIN)
    forged.m1 = M1(forged.m1.terms, forged.m1.sig_b, parties.owner.sign(b"x"))
    assert not _dispute(chain, parties, cid, forged, 0, PLAIN[0]).ok
    assert not _dispute(chain, parties, cid, x, 7, PLAIN[0]).ok


# -- penalizer -----------------------------------------------------------------------

def _alt(p, m1, vid, price):
    terms = TradeTerms(m1.terms.cid, m1.terms.reqid, vid, price)
    return M1.countersign(M0.create(terms, p.buyer), p.facilitator)


def _claim(chain, p, cid, a, b):
    return chain.commit(p.buyer.pk, "penalizer", "submit_claim", buyer_pk=p.buyer.pk,
                        facilitator_pk=p.facilitator.pk, cid=cid, m1=encode(a), m1_alt=encode(b))


def test_claim_pays_bounty_once(chain, parties):
    vid, cid = _closing(chain, parties)
    sybil = register(chain, parties, [b"fake"], amt_o=0)
    x = exchange(parties, cid, 1, vid, 10, PLAIN)
    alt = _alt(parties, x.m1, sybil, 1)
    r = _claim(chain, parties, cid, x.m1, alt)
    assert r.ok and r.result["bounty_paid"] == BOUNTY
    assert not _claim(chain, parties, cid, x.m1, alt).ok
    chain.commit(parties.buyer.pk, "channel", "channel_close", cid=cid, bundles=[])
    _settle(chain, cid)
    assert chain.balance(parties.buyer.pk) == 10_000 + BOUNTY
    assert chain.balance(parties.facilitator.pk) == 10_000 - BOUNTY


def test_claim_rejections(chain, parties):
    vid, cid = _closing(chain, parties)
    x = exchange(parties, cid, 1, vid, 10, PLAIN)
    same = _alt(parties, x.m1, vid, 1)
    assert "same content" in _claim(chain, parties, cid, x.m1, same).error
    forged = M1(same.terms, same.sig_b, parties.buyer.sign(b"nope"))
    assert _claim(chain, parties, cid, x.m1, forged).error == "Message signatures Invalid"
    assert chain.balance(parties.buyer.pk) == 10_000 - 1000

from __future__ import annotations

import os
from dataclasses import dataclass

import pytest
from hypothesis import HealthCheck, settings

from vader import crypto
from vader.contracts import deploy_all, deposit_sig, facilitator_sign, owner_sign
from vader.ledger import Ledger, LedgerConfig, LedgerTx
from vader.sim.kernel import Simulator
from vader.wire import (IOU, M0, M1, M2, M3, M4, M5, AckBody, KeyRelease, Registration, ReqId,
                        TradeTerms, chunk_ad, encode)

settings.register_profile("ci", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))

BOUNTY = 500
TAU = 5


@dataclass
class Chain:
    sim: Simulator
    ledger: Ledger
    contracts: dict

    def commit(self, submitter: bytes, contract: str, op: str, **args):
        fut = self.ledger.submit_tx(LedgerTx.call(submitter, contract, op, **args))
        # stop at the inclusion block so scheduled system calls do not run ahead
        self.sim.run(until=self.ledger.close_time(self.ledger.target_height(self.sim.now)))
        assert fut.done
        return fut.value

    def advance_to(self, height: int) -> None:
        self.sim.run(until=self.ledger.close_time(height))

    def balance(self, pk: bytes) -> int:
        return self.ledger.balance(pk)


@pytest.fixture
def chain() -> Chain:
    sim = Simulator()
    ledger = Ledger(sim, LedgerConfig(1000, 0))
    return Chain(sim, ledger, deploy_all(ledger, bounty=BOUNTY, tau=TAU, seed=1))


@dataclass
class Parties:
    owner: crypto.KeyPair
    facilitator: crypto.KeyPair
    buyer: crypto.KeyPair


@pytest.fixture
def parties() -> Parties:
    return Parties(crypto.keygen(101), crypto.keygen(202), crypto.keygen(303))


def register(chain: Chain, p: Parties, chunks: list[bytes], amt_o: int = 30) -> bytes:
    m = Registration(tuple(crypto.hash(c) for c in chunks), amt_o, p.owner.pk, p.facilitator.pk)
    sig_o = owner_sign(m, p.owner)
    r = chain.commit(p.facilitator.pk, "registry", "register_content", m=encode(m), sig_o=sig_o,
                     sig_f=facilitator_sign(m, sig_o, p.facilitator))
    assert r.ok, r.error
    return r.result


def open_channel(chain: Chain, p: Parties, b_amt: int = 1000, f_amt: int = 2000, tau: int = TAU) -> bytes:
    r = chain.commit(p.buyer.pk, "channel", "channel_open", buyer_pk=p.buyer.pk, b_amt=b_amt,
                     sig_b=deposit_sig(p.buyer, b_amt), facilitator_pk=p.facilitator.pk, f_amt=f_amt,
                     sig_f=deposit_sig(p.facilitator, f_amt), tau=tau)
    assert r.ok, r.error
    return r.result


@dataclass
class Exchange:
    m1: M1
    m3: M3
    m4: M4
    m5: M5
    k: bytes
    sent: list[bytes]

    def bundle(self, with_key: bool = True) -> dict:
        return {"m1": encode(self.m1), "m3": encode(self.m3), "m4": encode(self.m4),
                "m5": encode(self.m5) if with_key else None}


def exchange(p: Parties, cid: bytes, counter: int, vid: bytes, price: int, plain: list[bytes],
             sent: list[bytes] | None = None, key_seed: int = 9) -> Exchange:
    """Fully signed off-chain exchange; ``sent`` is what F actually encrypted."""
    rid = ReqId(counter, 1000 + counter)
    sent = list(plain if sent is None else sent)
    m1 = M1.countersign(M0.create(TradeTerms(cid, rid, vid, price), p.buyer), p.facilitator)
    k = crypto.sym_gen(key_seed + counter)
    cts = [crypto.enc(k, c, chunk_ad(cid, rid, i)) for i, c in enumerate(sent)]
    m3 = M3.countersign(M2.create(AckBody(cid, rid, tuple(crypto.hash(e) for e in cts)), p.buyer),
                        p.facilitator)
    m4 = M4.create(IOU(p.buyer.pk, p.facilitator.pk, price, cid, rid), p.buyer)
    m5 = M5.create(KeyRelease(cid, rid, k), p.facilitator)
    return Exchange(m1, m3, m4, m5, k, sent)


def fund(chain: Chain, p: Parties, amount: int = 10_000) -> None:
    chain.ledger.mint(p.buyer.pk, amount)
    chain.ledger.mint(p.facilitator.pk, amount)

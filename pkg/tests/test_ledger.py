from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vader.contracts import deploy_all
from vader.contracts.base import BaseContract
from vader.ledger import ContractError, Ledger, LedgerConfig, LedgerError, LedgerTx
from vader.sim.kernel import Simulator


class Counter(BaseContract):
    name = "counter"
    OPS = ("bump", "fail")

    def __init__(self):
        super().__init__()
        self.value = 0
        self.order: list[bytes] = []

    def op_bump(self, ctx, key):
        self.value += 1
        self.order.append(ctx.submitter)
        ctx.ledger.put_state(self.name, key, self.value, ctx.height)
        return ctx.time

    def op_fail(self, ctx):
        raise ContractError("nope")


def make(interval=1000, genesis=0):
    sim = Simulator(genesis)
    ledger = Ledger(sim, LedgerConfig(interval, genesis))
    c = ledger.deploy(Counter().bind(ledger))
    return sim, ledger, c


def submit_at(sim, ledger, at, submitter=b"A" * 32, op="bump", **args):
    box = {}

    def go():
        box["fut"] = ledger.submit_tx(LedgerTx.call(submitter, "counter", op, **args))

    sim.schedule(at, go)
    return box


@pytest.mark.parametrize("now,height,commit", [(250, 1, 1000), (1000, 1, 1000), (1, 1, 1000), (2999, 3, 3000)])
def test_inclusion_in_next_boundary(now, height, commit):
    sim, ledger, _ = make()
    box = submit_at(sim, ledger, now, key="k")
    sim.run()
    r = box["fut"].value
    assert (r.height, r.commit_time, r.ok) == (height, commit, True)
    assert r.result == commit


def test_tie_break_by_submitter():
    sim, ledger, c = make()
    submit_at(sim, ledger, 250, submitter=b"B" * 32, key="x")
    submit_at(sim, ledger, 250, submitter=b"A" * 32, key="y")
    sim.run()
    assert c.order == [b"A" * 32, b"B" * 32]


def test_failed_call_is_recorded():
    sim, ledger, _ = make()
    box = submit_at(sim, ledger, 10, op="fail")
    sim.run()
    r = box["fut"].value
    assert not r.ok and r.error == "nope"
    assert ledger.blocks[-1].txs and not ledger.blocks[-1].receipts[0].ok


def test_unknown_op_fails_in_receipt():
    sim, ledger, _ = make()
    box = submit_at(sim, ledger, 10, op="missing")
    sim.run()
    assert "unknown operation" in box["fut"].value.error


@pytest.mark.parametrize("now,h", [(0, 0), (999, 0), (3000, 3), (Fraction(5001, 2), 2)])
def test_block_height(now, h):
    _, ledger, _ = make()
    assert ledger.block_height(now) == h


def test_block_height_before_genesis():
    _, ledger, _ = make(genesis=500)
    with pytest.raises(LedgerError):
        ledger.block_height(100)


def test_read_state_visibility():
    sim, ledger, _ = make()
    assert ledger.read_state("counter", "k") is None
    submit_at(sim, ledger, 250, key="k")
    sim.run()
    assert ledger.read_state("counter", "k", height=1) == 1
    assert ledger.read_state("counter", "k", height=0) is None
    assert ledger.read_state("counter", "other") is None
    with pytest.raises(LedgerError):
        ledger.read_state("nope", "k")


def test_blocks_consecutive_and_close_times():
    sim, ledger, _ = make(interval=250, genesis=100)
    submit_at(sim, ledger, 120, key="a")
    submit_at(sim, ledger, 1100, key="b")
    sim.run()
    assert [b.height for b in ledger.blocks] == list(range(len(ledger.blocks)))
    for b in ledger.blocks:
        assert b.close_time == 100 + b.height * 250
        assert all(tx.submit_time <= b.close_time for tx in b.txs)


def test_mint_only_before_first_block():
    sim, ledger, _ = make()
    ledger.mint(b"p" * 32, 5)
    submit_at(sim, ledger, 0, key="a")
    sim.run()
    with pytest.raises(LedgerError):
        ledger.mint(b"p" * 32, 5)


def test_config_rejects_nonpositive_interval():
    with pytest.raises(ValueError):
        LedgerConfig(0)


@given(st.lists(st.tuples(st.integers(0, 10_000), st.sampled_from([b"A" * 32, b"B" * 32, b"C" * 32])),
                min_size=1, max_size=20))
def test_replay_is_bit_exact(stream):
    def run():
        sim = Simulator()
        ledger = Ledger(sim, LedgerConfig(700))
        deploy_all(ledger, bounty=10, tau=2)
        ledger.deploy(Counter().bind(ledger))
        for i, (at, who) in enumerate(stream):
            submit_at(sim, ledger, at, submitter=who, key=str(i))
        sim.run()
        return ledger.dump_json()

    assert run() == run()

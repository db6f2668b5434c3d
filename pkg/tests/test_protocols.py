from __future__ import annotations

from fractions import Fraction

import pytest

from vader import crypto
from vader.actors import FALSE_DISPUTE, WITHHOLD_KEY, WRONG_CHUNK, Strategy, make_content
from vader.contracts import royalty
from vader.protocols import DISPUTED_LOST, DISPUTED_REFUNDED, FAILED, SUCCESS
from vader.sim.config import ScenarioConfig
from vader.sim.scenario import build, execute, run_scenario


def cfg(**kw) -> ScenarioConfig:
    return ScenarioConfig(**kw).replace()


def with_strategy(result, role: str, strategy: Strategy):
    """Swap one party's strategy after build and mark it malicious for the audit."""
    party = result.facilitators[0] if role == "F" else result.buyers[0]
    party.strategy = strategy
    for p in result.parties:
        if p.pk == party.pk:
            p.malicious = not strategy.honest
    return execute(result)


@pytest.mark.parametrize("n", [1, 3, 10])
def test_vader_honest_two_commits_plus_settle(n):
    r = run_scenario(cfg(protocol="vader", files_per_buyer=n))
    o = r.outcomes[0]
    assert [x.outcome for x in o.exchanges] == [SUCCESS] * n
    assert (o.party_commits, o.settles) == (2, 1)
    assert [c["op"] for c in o.commits] == ["channel_open", "channel_close"]
    assert r.fairness.ok


def test_vader_zero_exchanges_full_refund():
    r = build(cfg(protocol="vader"))
    r.plans[0].jobs = []
    execute(r)
    o = r.outcomes[0]
    assert (o.party_commits, o.settles) == (2, 1)
    b, f = r.buyers[0], r.facilitators[0]
    assert r.ledger.balance(b.pk) == r.initial_balances[b.pk]
    assert r.ledger.balance(f.pk) == r.initial_balances[f.pk]
    assert r.fairness.ok


def test_vader_malicious_at_fourth_exchange():
    r = with_strategy(build(cfg(protocol="vader", files_per_buyer=4, prices=10_000, amt_o=30)), "F",
                      Strategy(WRONG_CHUNK, (0,), rounds=(4,)))
    o = r.outcomes[0]
    assert [x.outcome for x in o.exchanges] == [SUCCESS] * 3 + [DISPUTED_REFUNDED]
    assert o.exchanges[3].dispute_status == "FacilitatorCheated"
    b, f = r.buyers[0], r.facilitators[0]
    assert r.ledger.balance(b.pk) - r.initial_balances[b.pk] == -3 * 10_000
    assert r.ledger.balance(f.pk) - r.initial_balances[f.pk] == 3 * (10_000 - royalty(10_000, 30))
    assert r.fairness.ok


def test_withheld_key_refunds_after_tau():
    r = with_strategy(build(cfg(protocol="vader", files_per_buyer=2, tau=4)), "F",
                      Strategy(WITHHOLD_KEY, rounds=(1,)))
    o = r.outcomes[0]
    assert o.exchanges[0].outcome == DISPUTED_REFUNDED
    assert o.exchanges[0].dispute_status == "BuyerRefunded"
    assert o.exchanges[0].e2e_ms >= 4 * 1000
    assert o.exchanges[1].outcome == SUCCESS
    assert r.fairness.ok


def test_false_dispute_is_lost_and_facilitator_paid():
    r = with_strategy(build(cfg(protocol="vader", files_per_buyer=2)), "B", Strategy(FALSE_DISPUTE, rounds=(1,)))
    o = r.outcomes[0]
    assert o.exchanges[0].outcome == DISPUTED_LOST
    assert o.exchanges[0].dispute_status == "BuyerCheated"
    f = r.facilitators[0]
    assert r.ledger.balance(f.pk) - r.initial_balances[f.pk] == 2 * (10_000 - royalty(10_000, 30))
    assert r.fairness.ok


@pytest.mark.parametrize("n", [1, 4])
def test_bme_three_commits_per_file(n):
    r = run_scenario(cfg(protocol="bme", files_per_buyer=n))
    o = r.outcomes[0]
    assert o.party_commits == 3 * n
    assert all(x.commits == 3 for x in o.exchanges)
    assert r.fairness.ok


def test_bme_file_time_is_three_blocks():
    """Every commit waits for the next boundary and the off-chain steps fit inside a block."""
    r = run_scenario(cfg(protocol="bme", files_per_buyer=3, block_interval=1000))
    for x in r.outcomes[0].exchanges:
        assert x.e2e_ms == 3 * 1000
        assert x.chain_ms == 3 * 1000 - x.transfer_ms - (x.protocol_ms - x.chain_ms)


def test_bme_dispute_adds_commit():
    r = with_strategy(build(cfg(protocol="bme", files_per_buyer=2)), "F", Strategy(WRONG_CHUNK, rounds=(1,)))
    o = r.outcomes[0]
    assert o.exchanges[0].outcome == DISPUTED_REFUNDED
    assert o.exchanges[0].commits == 4
    assert o.exchanges[1].commits == 3
    assert r.fairness.ok


def test_vanilla_no_ledger_and_pure_latency():
    r = run_scenario(cfg(protocol="vanilla", files_per_buyer=3))
    o = r.outcomes[0]
    assert o.party_commits == 0 and not o.commits
    assert not [b for b in r.ledger.blocks if b.txs]
    lat = r.plans[0].latency
    for x in o.exchanges:
        assert x.outcome == SUCCESS
        assert x.protocol_ms == 2 * lat
        assert x.chain_ms == 0


def test_vanilla_malicious_records_failure_without_restitution():
    r = with_strategy(build(cfg(protocol="vanilla", files_per_buyer=2)), "F", Strategy(WRONG_CHUNK, rounds=(2,)))
    o = r.outcomes[0]
    assert [x.outcome for x in o.exchanges] == [SUCCESS, FAILED]
    assert o.payouts["paid"] == 10_000


def test_payout_equivalence_vader_bme():
    base = dict(n_buyers=3, n_facilitators=2, files_per_buyer=[2, 5], prices=[5_000, 9_000], seed=11)
    v = run_scenario(cfg(protocol="vader", **base))
    b = run_scenario(cfg(protocol="bme", **base))
    assert [p.pk for p in v.parties] == [p.pk for p in b.parties]
    for p in v.parties:
        assert v.ledger.balance(p.pk) == b.ledger.balance(p.pk), p.name


def test_retransmission_recovers_corruption():
    r = run_scenario(cfg(protocol="vader", files_per_buyer=5, chunk_corruption_rate=0.05, seed=4))
    o = r.outcomes[0]
    assert sum(x.retransmits for x in o.exchanges) > 0
    assert all(x.outcome == SUCCESS for x in o.exchanges)
    assert r.fairness.ok


def test_retry_exhaustion_fails_exchange():
    r = run_scenario(cfg(protocol="vader", files_per_buyer=2, chunk_corruption_rate=1.0, retry_cap=2))
    o = r.outcomes[0]
    assert all(x.outcome == FAILED for x in o.exchanges)
    b = r.buyers[0]
    assert r.ledger.balance(b.pk) == r.initial_balances[b.pk]
    assert r.fairness.ok


def test_honest_channel_log_has_six_slots_per_exchange():
    r = run_scenario(cfg(protocol="vader", files_per_buyer=3), trace=True)
    f = r.facilitators[0]
    for (cid, _rid), x in f.exchanges.items():
        assert x.m1 and x.m3 and x.m4 and x.m5
    lines = r.world.trace.to_jsonl().splitlines()
    assert lines and all(line.startswith("{") for line in lines)


def test_upload_with_stale_ids_is_refused():
    r = build(cfg(protocol="vader"))
    owner, f = r.owners[0], r.facilitators[0]
    content = make_content(99, [16, 16])
    stale = (crypto.hash(b"x"), crypto.hash(b"y"))
    assert owner.upload(content, 30, f, 10, id_c=stale) is None
    fut = owner.upload(content, 30, f, 10)
    r.world.sim.run()
    assert fut.value.ok and r.ledger.contracts["registry"].lookup(content.vid) is not None


def test_full_size_single_chunk_registers():
    content = make_content(5, [512 * 1024])
    assert len(content.chunks) == 1 and len(content.chunks[0]) == 512 * 1024
    assert content.vid == crypto.content_id([crypto.hash(content.chunks[0])])


def test_sessions_jsonl_schema():
    import json

    r = run_scenario(cfg(protocol="vader", files_per_buyer=2))
    d = json.loads(r.sessions_jsonl().splitlines()[0])
    assert {"exchanges", "commits", "disputes", "payouts"} <= set(d)
    assert isinstance(r.outcomes[0].exchanges[0].e2e_ms, Fraction)

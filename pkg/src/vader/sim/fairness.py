"""Post-run audit of money and outcomes against each party's ground truth.

Every check recomputes what a party should have ended with from its own
records (library, signed messages, strategy) and compares with the ledger.
An empty ``violations`` list means the run was fair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .. import crypto
from ..contracts import BUYER_CHEATED, UPHELD, royalty

CHECKS = (
    "conservation",
    "settlement_complete",
    "honest_buyer",
    "honest_facilitator",
    "upheld_refund",
    "collusion_bounty",
    "owner_royalty",
    "dispute_verdicts",
    "penalizer_soundness",
    "metrics_partition",
)


@dataclass
class FairnessReport:
    violations: list[dict[str, Any]] = field(default_factory=list)
    checked: dict[str, int] = field(default_factory=lambda: {c: 0 for c in CHECKS})
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def tick(self, check: str, n: int = 1) -> None:
        self.checked[check] += n

    def flag(self, check: str, **detail: Any) -> None:
        self.violations.append({"check": check, **detail})

    def count(self, check: str) -> int:
        return sum(1 for v in self.violations if v["check"] == check)

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "violations": self.violations, "checked": self.checked, "notes": self.notes}


def _settled_sales(result) -> list[dict[str, Any]]:
    """Every sale the ledger paid out for and did not refund."""
    ledger = result.ledger
    sales = []
    if result.config.protocol == "vader":
        resolver = ledger.contracts["dispute"]
        for rec in ledger.contracts["channel"].channels.values():
            if rec.report is None:
                continue
            for reqid in rec.report["paid"]:
                if reqid in rec.refunds:
                    continue
                q = rec.queued.get(reqid)
                vid = q.vid if q else resolver.find("channel", rec.cid, reqid).vid
                price = rec.report["paid"][reqid]
                sales.append({"cid": rec.cid, "reqid": reqid, "vid": vid, "price": price,
                              "seller": rec.facilitator_pk, "buyer": rec.buyer_pk})
    elif result.config.protocol == "bme":
        for ex in ledger.contracts["bme"].exchanges.values():
            if ex.stage == "Paid":
                sales.append({"cid": ex.cid, "reqid": ex.reqid, "vid": ex.vid, "price": ex.price,
                              "seller": ex.facilitator_pk, "buyer": ex.buyer_pk})
    return sales


def _cut(registry, vid: bytes, price: int, seller: bytes) -> tuple[bytes, int]:
    rec = registry.lookup(vid)
    if rec.owner_pk == seller:
        return rec.owner_pk, 0
    return rec.owner_pk, royalty(price, rec.amt_o)


def audit(result) -> FairnessReport:
    rep = FairnessReport()
    ledger = result.ledger
    cfg = result.config
    on_ledger = cfg.protocol != "vanilla"
    balances = ledger.balances
    delta = {pk: balances.get(pk, 0) - v for pk, v in result.initial_balances.items()}
    malicious = {p.pk: p.malicious for p in result.parties}

    # conservation
    rep.tick("conservation")
    if ledger.total_money() != ledger.minted:
        rep.flag("conservation", total=ledger.total_money(), minted=ledger.minted)
    rep.notes["total_money"] = ledger.total_money()
    rep.notes["minted"] = ledger.minted

    # everything locked has been released
    escrows = ledger.contracts["escrow"]
    for e in escrows.escrows.values():
        rep.tick("settlement_complete")
        if not e.closed or e.balance:
            rep.flag("settlement_complete", escrow=e.escrow_id, balance=e.balance)
    for rec in ledger.contracts["channel"].channels.values():
        rep.tick("settlement_complete")
        if rec.state != "Closed":
            rep.flag("settlement_complete", channel=rec.cid.hex(), state=rec.state)
    for case in ledger.contracts["dispute"].cases.values():
        rep.tick("settlement_complete")
        if not case.terminal:
            rep.flag("settlement_complete", dispute=case.dispute_id)

    registry = ledger.contracts["registry"]
    sales = _settled_sales(result)
    refunds = _refunds(result)

    # honest buyers pay exactly for the content they hold
    for plan, outcome in zip(result.plans, result.outcomes):
        b = plan.buyer
        if malicious[b.pk]:
            continue
        spent = 0
        for x in outcome.exchanges:
            rep.tick("honest_buyer")
            has = x.outcome == "Success" and _holds(b, bytes.fromhex(x.vid))
            if x.outcome == "Success":
                spent += x.price
                if not has:
                    rep.flag("honest_buyer", buyer=b.name, file=x.file_index, reason="paid but no content")
            elif on_ledger and x.reqid is not None:
                key = (x.cid, x.reqid)
                paid = any((s["cid"].hex(), s["reqid"]) == key for s in sales)
                if paid and key not in refunds:
                    rep.flag("honest_buyer", buyer=b.name, file=x.file_index,
                             reason="neither content nor refund")
        if on_ledger:
            rep.tick("honest_buyer")
            if delta[b.pk] != -spent:
                rep.flag("honest_buyer", buyer=b.name, expected=-spent, actual=delta[b.pk])
        else:
            rep.tick("honest_buyer")
            if outcome.payouts.get("paid", 0) != spent:
                rep.flag("honest_buyer", buyer=b.name, expected=spent, actual=outcome.payouts.get("paid"))

    # honest facilitators are paid for every acknowledged, unrefunded exchange
    if on_ledger:
        for f in result.facilitators:
            if malicious[f.pk]:
                continue
            expected = 0
            for (cid, reqid), x in f.exchanges.items():
                if x.m4 is None or (cid.hex(), reqid) in refunds:
                    continue
                _owner, cut = _cut(registry, x.terms.vid, x.terms.price, f.pk)
                expected += x.terms.price - cut
            rep.tick("honest_facilitator")
            if delta[f.pk] != expected:
                rep.flag("honest_facilitator", facilitator=f.name, expected=expected, actual=delta[f.pk])

    # upheld disputes refund exactly the agreed price
    for case in ledger.contracts["dispute"].cases.values():
        if not case.upheld:
            continue
        rep.tick("upheld_refund")
        got = refunds.get((case.cid.hex(), case.reqid))
        if got != case.price:
            rep.flag("upheld_refund", dispute=case.dispute_id, price=case.price, refunded=got)

    # defecting colluders collect a bounty worth more than the rewrite
    claims = {(c.cid, c.reqid): c for c in ledger.contracts["penalizer"].claims.values()}
    bounty = ledger.contracts["penalizer"].bounty
    silent = 0
    for plan, outcome in zip(result.plans, result.outcomes):
        for reqid in outcome.rewrites:
            x = next(e for e in outcome.exchanges if e.reqid == reqid)
            gain = x.price - cfg.collusion_price
            if plan.buyer.strategy.kind == "defecting":
                rep.tick("collusion_bounty")
                claim = claims.get((bytes.fromhex(x.cid), reqid))
                if claim is None or claim.bounty_paid != bounty or not bounty > gain:
                    rep.flag("collusion_bounty", buyer=plan.buyer.name, reqid=reqid,
                             paid=None if claim is None else claim.bounty_paid, gain=gain)
            else:
                silent += 1
    rep.notes["silent_rewrites"] = silent

    # owners receive their percentage of every settled sale
    if on_ledger:
        expected_roy: dict[bytes, int] = {}
        for s in sales:
            owner, cut = _cut(registry, s["vid"], s["price"], s["seller"])
            expected_roy[owner] = expected_roy.get(owner, 0) + cut
        for p in result.parties:
            if p.role not in ("owner", "sybil"):
                continue
            rep.tick("owner_royalty")
            if delta[p.pk] != expected_roy.get(p.pk, 0):
                rep.flag("owner_royalty", owner=p.name, expected=expected_roy.get(p.pk, 0), actual=delta[p.pk])

    # verdicts agree with who actually misbehaved
    for case in ledger.contracts["dispute"].cases.values():
        rep.tick("dispute_verdicts")
        if case.status == BUYER_CHEATED and not malicious[case.buyer_pk]:
            rep.flag("dispute_verdicts", dispute=case.dispute_id, reason="honest buyer judged a cheat")
        if case.status in UPHELD and not malicious[case.facilitator_pk] and cfg.chunk_corruption_rate == 0:
            rep.flag("dispute_verdicts", dispute=case.dispute_id, reason="honest facilitator lost a dispute")

    # only facilitators that co-signed two agreements get penalized
    for claim in claims.values():
        rep.tick("penalizer_soundness")
        f = next(f for f in result.facilitators if f.pk == claim.facilitator_pk)
        if f.strategy.kind != "colluder":
            rep.flag("penalizer_soundness", claim=claim.claim_id, facilitator=f.name)

    for r in result.metrics:
        rep.tick("metrics_partition")
        if r.partition_error() != 0:
            rep.flag("metrics_partition", buyer=r.buyer_id, file=r.file_index, error=str(r.partition_error()))
    return rep


def _refunds(result) -> dict[tuple[str, str], int]:
    out: dict[tuple[str, str], int] = {}
    ledger = result.ledger
    for rec in ledger.contracts["channel"].channels.values():
        for reqid, amount in rec.refunds.items():
            out[(rec.cid.hex(), reqid)] = amount
    for ex in ledger.contracts["bme"].exchanges.values():
        if ex.stage == "Refunded":
            out[(ex.cid.hex(), ex.reqid)] = ex.price
    return out


def _holds(buyer, vid: bytes) -> bool:
    plain = buyer.library.get(vid)
    return plain is not None and crypto.content_id([crypto.hash(c) for c in plain]) == vid

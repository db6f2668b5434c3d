"""Build a whole market from a :class:`ScenarioConfig` and run it to completion."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .. import crypto
from ..actors import (COLLUDER, DEFECTING, FALSE_DISPUTE, HONEST, ActorParams, Buyer, Content, Facilitator,
                      FileJob, Owner, Strategy, Trace, World, make_content)
from ..contracts import deploy_all
from ..ledger import Ledger, LedgerConfig
from ..protocols import SessionOutcome, SessionPlan, collect_payouts, start_session
from .config import ScenarioConfig, network_for, validate
from .kernel import LEDGER, Process, Simulator, ms
from .metrics import MetricsRecord, to_csv
from .network import Capacity, Network, assign_facilitators, place


@dataclass
class Party:
    """Ground truth about one participant, used by the fairness audit."""

    role: str
    name: str
    pk: bytes
    malicious: bool
    strategy: str
    index: int


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    world: World
    network: Network
    parties: list[Party]
    buyers: list[Buyer]
    facilitators: list[Facilitator]
    owners: list[Owner]
    plans: list[SessionPlan]
    outcomes: list[SessionOutcome]
    metrics: list[MetricsRecord]
    initial_balances: dict[bytes, int]
    fairness: Any = None
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def ledger(self) -> Ledger:
        return self.world.ledger

    def metrics_csv(self) -> str:
        return to_csv(self.metrics)

    def ledger_json(self) -> str:
        return self.ledger.dump_json()

    def fairness_json(self) -> str:
        return json.dumps(self.fairness.to_dict(), sort_keys=True, indent=1)

    def sessions_jsonl(self) -> str:
        return "".join(o.to_json() + "\n" for o in self.outcomes)


def _pick(rng: random.Random, count: int, fraction: float) -> set[int]:
    k = round(count * fraction)
    order = list(range(count))
    rng.shuffle(order)
    return set(order[:k])


def actor_params(cfg: ScenarioConfig) -> ActorParams:
    return ActorParams(tau=cfg.tau, retry_cap=cfg.retry_cap, step_timeout=ms(cfg.step_timeout),
                       file_size=cfg.file_size, n_chunks=cfg.n_chunks, corruption_rate=cfg.chunk_corruption_rate,
                       crypto_ms_per_byte=ms(cfg.crypto_ms_per_byte), collusion=cfg.collusion,
                       collusion_price=cfg.collusion_price)


def build(cfg: ScenarioConfig, trace: bool = False) -> ScenarioResult:
    """Create every party, register content and schedule all sessions (nothing runs yet)."""
    cfg = validate(cfg)
    rng = random.Random(cfg.seed)
    sim = Simulator(ms(cfg.genesis_time))
    ledger = Ledger(sim, LedgerConfig(ms(cfg.block_interval), ms(cfg.genesis_time)))
    deploy_all(ledger, bounty=cfg.bounty, tau=cfg.tau, seed=rng.getrandbits(32))
    world = World(sim, ledger, actor_params(cfg), Trace(sim, enabled=trace))
    net = network_for(cfg)
    off_ledger = cfg.protocol == "vanilla"
    collusion = cfg.collusion != "off"

    def keys() -> crypto.KeyPair:
        return crypto.keygen(rng.getrandbits(63))

    parties: list[Party] = []
    fac_dcs = place(cfg.n_facilitators, len(net))
    bad_f = _pick(rng, cfg.n_facilitators, cfg.malicious_f_fraction)
    facilitators: list[Facilitator] = []
    for j in range(cfg.n_facilitators):
        if j in bad_f:
            strat = Strategy(COLLUDER) if collusion else Strategy(cfg.malicious_f_strategy,
                                                                  tuple(cfg.wrong_chunk_indices))
        else:
            strat = Strategy(HONEST)
        slots = cfg.facilitator_concurrency or None
        f = Facilitator(world, f"F{j}", keys(), fac_dcs[j], strat, Capacity(sim, slots), rng.getrandbits(32))
        facilitators.append(f)
        parties.append(Party("facilitator", f.name, f.pk, j in bad_f, strat.kind, j))

    buyer_dcs = place(cfg.n_buyers, len(net))
    bad_b = _pick(rng, cfg.n_buyers, cfg.malicious_b_fraction)
    buyers: list[Buyer] = []
    for i in range(cfg.n_buyers):
        if i in bad_b:
            kind = {"silent": COLLUDER, "defect": DEFECTING}.get(cfg.collusion, cfg.malicious_b_strategy)
        else:
            kind = HONEST
        b = Buyer(world, f"B{i}", keys(), buyer_dcs[i], Strategy(kind), rng.getrandbits(32))
        buyers.append(b)
        parties.append(Party("buyer", b.name, b.pk, i in bad_b, kind, i))

    lo_p, hi_p = cfg.price_range()
    owners: list[Owner] = []
    catalog: list[list[tuple[bytes, int, Content]]] = []
    for j, f in enumerate(facilitators):
        owner = Owner(world, f"O{j}", keys())
        owners.append(owner)
        parties.append(Party("owner", owner.name, owner.pk, False, HONEST, j))
        items = []
        for _ in range(cfg.contents_per_facilitator):
            content = make_content(rng.getrandbits(63), cfg.chunk_lengths())
            price = rng.randint(lo_p, hi_p)
            if off_ledger:
                f.host_offchain(owner, content, cfg.amt_o, price)
            else:
                owner.upload(content, cfg.amt_o, f, price)
            items.append((content.vid, price, content))
        catalog.append(items)
        if collusion and f.strategy.kind == COLLUDER and not off_ledger:
            # sybil owner controlled by the facilitator, taking no royalty
            sybil = Owner(world, f"S{j}", keys())
            fake = make_content(rng.getrandbits(63), cfg.chunk_lengths())
            sybil.upload(fake, 0, f, cfg.collusion_price)
            f.sybil_vid = fake.vid
            parties.append(Party("sybil", sybil.name, sybil.pk, True, COLLUDER, j))

    initial: dict[bytes, int] = {}
    for p in parties:
        if p.role in ("buyer", "facilitator"):
            ledger.mint(p.pk, cfg.initial_balance)
        initial[p.pk] = ledger.balance(p.pk)

    assignment = assign_facilitators(cfg.topology, buyer_dcs, fac_dcs, net, rng)
    lo_n, hi_n = cfg.files_range()
    plans: list[SessionPlan] = []
    for i, b in enumerate(buyers):
        j = assignment[i]
        f = facilitators[j]
        n_files = rng.randint(lo_n, hi_n)
        jobs = []
        for k in range(n_files):
            vid, price, content = catalog[j][rng.randrange(len(catalog[j]))]
            jobs.append(FileJob(k, vid, price, content.id_c))
        collude = (collusion and not off_ledger and cfg.protocol == "vader"
                   and b.strategy.kind in (COLLUDER, DEFECTING) and f.strategy.kind == COLLUDER)
        plans.append(SessionPlan(cfg.protocol, b, f, jobs, net.latency(b.dc, f.dc), net.bandwidth(b.dc, f.dc),
                                 cfg.buyer_deposit, cfg.facilitator_deposit, collude,
                                 f.sybil_vid if collude else None, rng.getrandbits(32)))

    result = ScenarioResult(cfg, world, net, parties, buyers, facilitators, owners, plans, [], [], initial)
    procs: list[Process] = []

    def launch() -> None:
        for plan in plans:
            procs.append(start_session(world, plan))

    # sessions start right after the genesis block seals
    sim.schedule(sim.now, launch, priority=LEDGER + 1)
    result.extras["procs"] = procs
    result.extras["assignment"] = assignment
    return result


def execute(result: ScenarioResult) -> ScenarioResult:
    from .fairness import audit

    world = result.world
    world.sim.run()
    world.ledger.finalize()
    procs: list[Process] = result.extras.pop("procs")
    stuck = [p.name for p in procs if not p.done]
    if stuck:
        raise RuntimeError(f"sessions did not terminate: {stuck}")
    result.outcomes = [p.value for p in procs]
    for outcome in result.outcomes:
        collect_payouts(world, outcome)
    fac_index = {f.name: j for j, f in enumerate(result.facilitators)}
    for i, (plan, outcome) in enumerate(zip(result.plans, result.outcomes)):
        for x in outcome.exchanges:
            result.metrics.append(MetricsRecord(
                i, x.file_index, plan.protocol, x.e2e_ms, x.protocol_ms, x.transfer_ms, x.verify_ms,
                x.commits, x.outcome, x.chain_ms, fac_index[plan.facilitator.name]))
    result.metrics.sort(key=lambda r: (r.buyer_id, r.file_index))
    result.fairness = audit(result)
    return result


def run_scenario(cfg: ScenarioConfig, trace: bool = False) -> ScenarioResult:
    return execute(build(cfg, trace))


def session_commit_counts(result: ScenarioResult) -> list[dict[str, int]]:
    """Party commits and non-deferred settlements per session."""
    return [{"party": o.party_commits, "settles": o.settles} for o in result.outcomes]


def per_file_chain_ms(result: ScenarioResult) -> list[Fraction]:
    """Mean on-chain wait per file for each session."""
    out = []
    for o in result.outcomes:
        if o.exchanges:
            out.append(sum((x.chain_ms for x in o.exchanges), Fraction(0)) / len(o.exchanges))
    return out

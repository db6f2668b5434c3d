"""On-ledger contracts and a helper that deploys the full set."""

from __future__ import annotations

from ..ledger import Ledger
from .bme import BmeContract
from .channel import Bundle, ChannelContract, ChannelRecord, bundle_problem
from .dispute import (AWAITING_KEY, BUYER_CHEATED, BUYER_REFUNDED, FACILITATOR_CHEATED, UPHELD,
                      DisputeCase, DisputeContract)
from .escrow import OWNER_SIGNED, Escrow, EscrowContract, arbiter, deposit_sig
from .penalizer import Claim, PenalizerContract, claim_holds
from .registry import ContentRecord, RegistryContract, facilitator_sign, owner_sign, royalty


def deploy_all(ledger: Ledger, *, bounty: int, tau: int, seed: int = 0) -> dict[str, object]:
    contracts = [
        EscrowContract(),
        RegistryContract(),
        ChannelContract(seed),
        DisputeContract(),
        PenalizerContract(bounty),
        BmeContract(tau),
    ]
    for c in contracts:
        ledger.deploy(c.bind(ledger))
    return {c.name: c for c in contracts}


__all__ = [
    "AWAITING_KEY",
    "BUYER_CHEATED",
    "BUYER_REFUNDED",
    "FACILITATOR_CHEATED",
    "UPHELD",
    "OWNER_SIGNED",
    "BmeContract",
    "Bundle",
    "ChannelContract",
    "ChannelRecord",
    "Claim",
    "ContentRecord",
    "DisputeCase",
    "DisputeContract",
    "Escrow",
    "EscrowContract",
    "PenalizerContract",
    "RegistryContract",
    "arbiter",
    "bundle_problem",
    "claim_holds",
    "deploy_all",
    "deposit_sig",
    "facilitator_sign",
    "owner_sign",
    "royalty",
]

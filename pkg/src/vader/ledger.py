"""Simulated blockchain with a fixed block interval.

Blocks close at ``genesis_time + height * block_interval``. A transaction is
included in the first block, not yet sealed, whose close time is at or after
its submission time, and its contract call executes when that block seals.
Within a block, transactions run ordered by (submit time, submitter pk,
arrival). Failed calls stay on chain with a failure receipt.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from fractions import Fraction
from typing import Any, Callable, Protocol

from .sim.kernel import LEDGER, Future, Simulator, ms
from .wire.codec import decode_value, encode_value

SYSTEM_PK = b"\x00" * 32


class ContractError(Exception):
    """A contract call was rejected; state is left as the contract found it."""


class LedgerError(Exception):
    pass


@dataclass(frozen=True)
class LedgerConfig:
    block_interval: Fraction = Fraction(1000)
    genesis_time: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "block_interval", ms(self.block_interval))
        object.__setattr__(self, "genesis_time", ms(self.genesis_time))
        if self.block_interval <= 0:
            raise ValueError("block_interval must be > 0")


@dataclass
class LedgerTx:
    submitter: bytes
    contract: str
    op: str
    payload: bytes
    submit_time: Fraction = Fraction(0)
    seq: int = 0
    system: bool = False

    @classmethod
    def call(cls, submitter: bytes, contract: str, op: str, **args: Any) -> "LedgerTx":
        return cls(submitter, contract, op, encode_value(args))

    @cached_property
    def _decoded(self) -> dict[str, Any]:
        return decode_value(self.payload)

    def args(self) -> dict[str, Any]:
        return self._decoded

    def sort_key(self):
        return (self.submit_time, self.submitter, self.seq)


@dataclass
class TxReceipt:
    height: int
    commit_time: Fraction
    ok: bool
    result: Any = None
    error: str | None = None
    tx: LedgerTx | None = field(default=None, repr=False)


@dataclass
class Block:
    height: int
    close_time: Fraction
    txs: list[LedgerTx] = field(default_factory=list)
    receipts: list[TxReceipt] = field(default_factory=list)


@dataclass
class CallContext:
    ledger: "Ledger"
    height: int
    time: Fraction
    submitter: bytes
    system: bool


class Contract(Protocol):
    name: str

    def execute(self, op: str, args: dict[str, Any], ctx: CallContext) -> Any: ...

    def held(self) -> int: ...

    def dump(self) -> dict[str, Any]: ...


class Ledger:
    def __init__(self, sim: Simulator, config: LedgerConfig | None = None):
        self.sim = sim
        self.config = config or LedgerConfig()
        if sim.now < self.config.genesis_time:
            raise LedgerError("simulator clock is before genesis")
        self.contracts: dict[str, Contract] = {}
        self.balances: dict[bytes, int] = {}
        self.blocks: list[Block] = []
        self._pending: dict[int, list[tuple[LedgerTx, Future]]] = {}
        self._sealed = -1
        self._seq = 0
        self._history: dict[tuple[str, Any], list[tuple[int, Any]]] = {}
        self.minted = 0
        self._watchers: dict[tuple[str, str], list[Callable[[TxReceipt], None]]] = {}
        self._waiters: dict[tuple[str, str], list[tuple[Callable[[TxReceipt], bool], Future]]] = {}

    # -- time ----------------------------------------------------------------
    def block_height(self, now: Any) -> int:
        now = ms(now)
        if now < self.config.genesis_time:
            raise LedgerError(f"time {now} is before genesis {self.config.genesis_time}")
        return math.floor((now - self.config.genesis_time) / self.config.block_interval)

    def close_time(self, height: int) -> Fraction:
        return self.config.genesis_time + height * self.config.block_interval

    def current_height(self) -> int:
        return self.block_height(self.sim.now)

    def target_height(self, now: Any) -> int:
        now = ms(now)
        h = math.ceil((now - self.config.genesis_time) / self.config.block_interval)
        return max(h, self._sealed + 1)

    # -- money ---------------------------------------------------------------
    def mint(self, pk: bytes, amount: int) -> None:
        if self.blocks:
            raise LedgerError("minting is only allowed before the first block")
        self.balances[pk] = self.balances.get(pk, 0) + amount
        self.minted += amount

    def balance(self, pk: bytes) -> int:
        return self.balances.get(pk, 0)

    def debit(self, pk: bytes, amount: int) -> None:
        if amount < 0:
            raise ContractError("negative amount")
        if self.balances.get(pk, 0) < amount:
            raise ContractError("insufficient ledger balance")
        self.balances[pk] -= amount

    def credit(self, pk: bytes, amount: int) -> None:
        if amount < 0:
            raise ContractError("negative amount")
        self.balances[pk] = self.balances.get(pk, 0) + amount

    def total_money(self) -> int:
        return sum(self.balances.values()) + sum(c.held() for c in self.contracts.values())

    # -- contracts -----------------------------------------------------------
    def deploy(self, contract: Contract) -> Contract:
        if contract.name in self.contracts:
            raise LedgerError(f"contract {contract.name!r} already deployed")
        self.contracts[contract.name] = contract
        return contract

    def put_state(self, contract: str, key: Any, value: Any, height: int) -> None:
        self._history.setdefault((contract, key), []).append((height, copy.deepcopy(value)))

    def read_state(self, contract: str, key: Any, height: int | None = None) -> Any:
        """Committed value as of ``height`` (default: the latest sealed block)."""
        if contract not in self.contracts:
            raise LedgerError(f"unknown contract {contract!r}")
        if height is None:
            height = self._sealed
        versions = self._history.get((contract, key))
        if not versions:
            return None
        found = None
        for h, value in versions:
            if h > height:
                break
            found = value
        return copy.deepcopy(found)

    # -- transactions ----------------------------------------------------------
    def submit_tx(self, tx: LedgerTx) -> Future:
        """Queue ``tx`` at the current virtual time; resolves with a TxReceipt."""
        if tx.contract not in self.contracts:
            raise LedgerError(f"unknown contract {tx.contract!r}")
        tx.submit_time = self.sim.now
        tx.seq = self._seq
        self._seq += 1
        fut = self.sim.future()
        h = self.target_height(self.sim.now)
        self._enqueue(h, tx, fut)
        return fut

    def schedule_call(self, height: int, contract: str, op: str, **args: Any) -> Future:
        """Contract-triggered call executed automatically in block ``height``."""
        tx = LedgerTx.call(SYSTEM_PK, contract, op, **args)
        tx.submit_time = self.sim.now
        tx.seq = self._seq
        tx.system = True
        self._seq += 1
        fut = self.sim.future()
        self._enqueue(max(height, self._sealed + 1), tx, fut)
        return fut

    def _enqueue(self, height: int, tx: LedgerTx, fut: Future) -> None:
        if height not in self._pending:
            self._pending[height] = []
            self.sim.schedule(self.close_time(height), self._seal, height, priority=LEDGER)
        self._pending[height].append((tx, fut))

    def _seal(self, height: int) -> None:
        # fill in empty blocks so heights stay consecutive
        for h in range(self._sealed + 1, height):
            self.blocks.append(Block(h, self.close_time(h)))
        self._sealed = height
        entries = sorted(self._pending.pop(height, []), key=lambda e: e[0].sort_key())
        block = Block(height, self.close_time(height))
        self.blocks.append(block)
        for tx, fut in entries:
            receipt = self._execute(block, tx)
            block.txs.append(tx)
            block.receipts.append(receipt)
            fut.set(receipt)
        for receipt in block.receipts:
            self._notify(receipt)

    def _execute(self, block: Block, tx: LedgerTx) -> TxReceipt:
        ctx = CallContext(self, block.height, block.close_time, tx.submitter, tx.system)
        contract = self.contracts[tx.contract]
        try:
            result = contract.execute(tx.op, tx.args(), ctx)
        except ContractError as exc:
            return TxReceipt(block.height, block.close_time, False, None, str(exc), tx)
        return TxReceipt(block.height, block.close_time, True, result, None, tx)

    def _notify(self, receipt: TxReceipt) -> None:
        key = (receipt.tx.contract, receipt.tx.op)
        for cb in self._watchers.get(key, ()):
            self.sim.call_soon(cb, receipt)
        waiters = self._waiters.get(key)
        if waiters:
            keep = []
            for pred, fut in waiters:
                if fut.done:
                    continue
                if pred(receipt):
                    fut.set(receipt)
                else:
                    keep.append((pred, fut))
            self._waiters[key] = keep

    def watch(self, contract: str, op: str, callback: Callable[[TxReceipt], None]) -> None:
        """Call ``callback(receipt)`` for every future commit of ``contract.op``."""
        self._watchers.setdefault((contract, op), []).append(callback)

    def wait_for(self, contract: str, op: str,
                 pred: Callable[[TxReceipt], bool] = lambda r: True) -> Future:
        """Future resolved by the next committed ``contract.op`` receipt matching ``pred``."""
        fut = self.sim.future()
        self._waiters.setdefault((contract, op), []).append((pred, fut))
        return fut

    def finalize(self) -> None:
        """Seal every pending block regardless of the clock (end of run)."""
        while self._pending:
            self.sim.run()

    # -- audit -------------------------------------------------------------------
    def receipts(self):
        for block in self.blocks:
            yield from block.receipts

    def dump(self) -> dict[str, Any]:
        blocks = []
        for b in self.blocks:
            if not b.txs:
                continue
            blocks.append(
                {
                    "height": b.height,
                    "close_time": _num(b.close_time),
                    "txs": [
                        {
                            "submitter": tx.submitter.hex(),
                            "contract": tx.contract,
                            "op": tx.op,
                            "submit_time": _num(tx.submit_time),
                            "system": tx.system,
                            "payload_hash": _short_hash(tx.payload),
                            "ok": r.ok,
                            "error": r.error,
                        }
                        for tx, r in zip(b.txs, b.receipts)
                    ],
                }
            )
        return {
            "config": {
                "block_interval": _num(self.config.block_interval),
                "genesis_time": _num(self.config.genesis_time),
            },
            "height": self._sealed,
            "minted": self.minted,
            "total_money": self.total_money(),
            "balances": {pk.hex(): v for pk, v in sorted(self.balances.items())},
            "blocks": blocks,
            "contracts": {name: c.dump() for name, c in sorted(self.contracts.items())},
        }

    def dump_json(self) -> str:
        return json.dumps(self.dump(), sort_keys=True, indent=1)


def _num(x: Fraction) -> Any:
    return int(x) if x.denominator == 1 else float(x)


def _short_hash(raw: bytes) -> str:
    import hashlib

    return hashlib.sha256(raw).hexdigest()[:16]

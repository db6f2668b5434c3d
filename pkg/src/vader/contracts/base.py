from __future__ import annotations

import inspect
from typing import Any

from ..ledger import CallContext, ContractError


class BaseContract:
    """Dispatches ``op`` to ``op_<name>`` and snapshots records into ledger history."""

    name = "base"
    OPS: tuple[str, ...] = ()

    def __init__(self) -> None:
        self.ledger = None

    def bind(self, ledger) -> "BaseContract":
        self.ledger = ledger
        return self

    def execute(self, op: str, args: dict[str, Any], ctx: CallContext) -> Any:
        if op not in self.OPS:
            raise ContractError(f"{self.name}: unknown operation {op!r}")
        fn = getattr(self, "op_" + op)
        try:
            inspect.signature(fn).bind(ctx, **args)
        except TypeError as exc:
            raise ContractError(f"{self.name}.{op}: bad arguments ({exc})") from None
        return fn(ctx, **args)

    def held(self) -> int:
        return 0

    def dump(self) -> dict[str, Any]:
        return {}

    def _snapshot(self, ctx: CallContext, key: Any, record: Any) -> None:
        ctx.ledger.put_state(self.name, key, record.to_dict(), ctx.height)

    def peer(self, ctx: CallContext, name: str):
        try:
            return ctx.ledger.contracts[name]
        except KeyError:
            raise ContractError(f"contract {name!r} not deployed") from None

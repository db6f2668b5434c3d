"""Scenario configuration: a flat dataclass loadable from TOML with key=value overrides.

Money fields are integer milli-units. Times are virtual milliseconds; ``tau``
counts blocks.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PROTOCOLS = ("vader", "bme", "vanilla")
TOPOLOGIES = ("cdn", "random")
F_STRATEGIES = ("wrong_chunk", "withhold_key")
B_STRATEGIES = ("false_dispute",)
COLLUSION = ("off", "defect", "silent")

MIB = 1024 * 1024
KIB = 1024


class ConfigError(ValueError):
    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name
        self.reason = reason


@dataclass
class ScenarioConfig:
    seed: int = 0
    protocol: str = "vader"
    n_buyers: int = 1
    n_facilitators: int = 1
    files_per_buyer: Any = 10  # int or [lo, hi] inclusive
    file_size: int = 20 * MIB
    chunk_size: int = 512 * KIB
    # bytes per chunk actually materialized for hashing/encryption; 0 = full chunk
    payload_bytes: int = 64
    block_interval: Any = 1000
    genesis_time: Any = 0
    tau: int = 10
    bounty: int = 100_000
    prices: Any = 10_000  # int or [lo, hi] inclusive, per content
    amt_o: int = 30
    topology: str = "cdn"
    dc_names: list | None = None
    latency_ms: list | None = None
    bandwidth_bps: list | None = None
    malicious_f_fraction: float = 0.0
    malicious_b_fraction: float = 0.0
    malicious_f_strategy: str = "wrong_chunk"
    malicious_b_strategy: str = "false_dispute"
    wrong_chunk_indices: list = field(default_factory=lambda: [0])
    collusion: str = "off"
    collusion_price: int = 1_000
    retry_cap: int = 3
    step_timeout: Any = 60_000
    chunk_corruption_rate: float = 0.0
    crypto_ms_per_byte: Any = 0
    facilitator_concurrency: int = 0  # 0 = unlimited
    contents_per_facilitator: int = 1
    buyer_deposit: int = 0  # 0 = sized from the plan
    facilitator_deposit: int = 0  # 0 = bounty + plan value
    initial_balance: int = 10**12

    # -- derived ---------------------------------------------------------------
    @property
    def n_chunks(self) -> int:
        return math.ceil(self.file_size / self.chunk_size)

    def chunk_lengths(self) -> list[int]:
        out = []
        for j in range(self.n_chunks):
            real = min(self.chunk_size, self.file_size - j * self.chunk_size)
            out.append(min(real, self.payload_bytes) if self.payload_bytes else real)
        return out

    def price_range(self) -> tuple[int, int]:
        return _range(self.prices)

    def files_range(self) -> tuple[int, int]:
        return _range(self.files_per_buyer)

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return validate(dataclasses.replace(self, **changes))

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def _range(v: Any) -> tuple[int, int]:
    if isinstance(v, (list, tuple)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_INT = {"seed", "n_buyers", "n_facilitators", "file_size", "chunk_size", "payload_bytes", "tau", "bounty",
        "amt_o", "collusion_price", "retry_cap", "facilitator_concurrency", "contents_per_facilitator",
        "buyer_deposit", "facilitator_deposit", "initial_balance"}
_NUM = {"block_interval", "genesis_time", "step_timeout", "crypto_ms_per_byte", "malicious_f_fraction",
        "malicious_b_fraction", "chunk_corruption_rate"}
_STR = {"protocol", "topology", "malicious_f_strategy", "malicious_b_strategy", "collusion"}


def _check_range_field(name: str, v: Any) -> None:
    if isinstance(v, bool):
        raise ConfigError(name, "expected an integer or [lo, hi]")
    if isinstance(v, int):
        lo = hi = v
    elif isinstance(v, (list, tuple)) and len(v) == 2 and all(
            isinstance(x, int) and not isinstance(x, bool) for x in v):
        lo, hi = v
    else:
        raise ConfigError(name, "expected an integer or [lo, hi]")
    if lo < 1 or hi < lo:
        raise ConfigError(name, f"need 1 <= lo <= hi, got {v!r}")


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    for name in _INT:
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(name, f"expected an integer, got {v!r}")
    for name in _NUM:
        v = getattr(cfg, name)
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(name, f"expected a number, got {v!r}")
    for name in _STR:
        if not isinstance(getattr(cfg, name), str):
            raise ConfigError(name, "expected a string")
    choices = {"protocol": PROTOCOLS, "topology": TOPOLOGIES, "malicious_f_strategy": F_STRATEGIES,
               "malicious_b_strategy": B_STRATEGIES, "collusion": COLLUSION}
    for name, allowed in choices.items():
        if getattr(cfg, name) not in allowed:
            raise ConfigError(name, f"must be one of {', '.join(allowed)}")
    for name in ("malicious_f_fraction", "malicious_b_fraction", "chunk_corruption_rate"):
        if not 0 <= getattr(cfg, name) <= 1:
            raise ConfigError(name, "must lie in [0, 1]")
    positive = ("n_buyers", "n_facilitators", "file_size", "chunk_size", "block_interval", "bounty",
                "step_timeout", "contents_per_facilitator", "initial_balance", "collusion_price")
    for name in positive:
        if getattr(cfg, name) <= 0:
            raise ConfigError(name, "must be > 0")
    for name in ("payload_bytes", "retry_cap", "facilitator_concurrency", "buyer_deposit",
                 "facilitator_deposit", "crypto_ms_per_byte", "genesis_time"):
        if getattr(cfg, name) < 0:
            raise ConfigError(name, "must be >= 0")
    if cfg.chunk_size > cfg.file_size:
        raise ConfigError("chunk_size", "must not exceed file_size")
    if cfg.tau < 2:
        raise ConfigError("tau", "must be at least 2 blocks")
    if not 0 <= cfg.amt_o <= 100:
        raise ConfigError("amt_o", "must lie in [0, 100]")
    _check_range_field("files_per_buyer", cfg.files_per_buyer)
    _check_range_field("prices", cfg.prices)
    if cfg.bounty <= cfg.price_range()[1]:
        raise ConfigError("bounty", "must exceed the largest content price")
    if cfg.collusion != "off" and cfg.collusion_price >= cfg.price_range()[0]:
        raise ConfigError("collusion_price", "must be below the smallest content price")
    if not isinstance(cfg.wrong_chunk_indices, (list, tuple)) or not cfg.wrong_chunk_indices or any(
            not isinstance(i, int) or not 0 <= i < cfg.n_chunks for i in cfg.wrong_chunk_indices):
        raise ConfigError("wrong_chunk_indices", f"need chunk indices in [0, {cfg.n_chunks})")
    matrices = (cfg.dc_names, cfg.latency_ms, cfg.bandwidth_bps)
    if any(m is not None for m in matrices):
        if any(m is None for m in matrices):
            raise ConfigError("dc_names", "dc_names, latency_ms and bandwidth_bps go together")
        from .network import Network

        try:
            Network.build(cfg.dc_names, cfg.latency_ms, cfg.bandwidth_bps)
        except (ValueError, TypeError) as exc:
            name = "latency_ms" if "latency" in str(exc) else "bandwidth_bps"
            raise ConfigError(name, str(exc)) from None
    return cfg


def network_for(cfg: ScenarioConfig):
    from .network import Network

    if cfg.dc_names is None:
        return Network.default()
    return Network.build(cfg.dc_names, cfg.latency_ms, cfg.bandwidth_bps)


def from_mapping(data: dict[str, Any]) -> ScenarioConfig:
    unknown = sorted(set(data) - set(FIELDS))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    return validate(ScenarioConfig(**data))


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, raw = (p.strip() for p in text.split("=", 1))
    if key not in FIELDS:
        raise ConfigError(key, "unknown configuration key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def load_config(path: str | Path | None = None, overrides: list[str] | tuple[str, ...] = ()) -> ScenarioConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", f"not valid TOML: {exc}") from None
    for item in overrides:
        key, value = parse_override(item)
        data[key] = value
    return from_mapping(data)

"""Closed-form per-file latency on public chains.

A state channel pays two block waits (open and close) spread over every file
in the session; the on-chain baseline pays three block waits per file. The
remaining per-file cost (messaging, transfer, decryption) is a constant fitted
from one reference chain.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

# reference chain used to fit the per-file constants, with its measured latencies (s)
REFERENCE = ("Ethereum", 14.58, 0.57, 44.22)
REFERENCE_FILES = 200
FILE_BYTES = 20_000_000


@dataclass(frozen=True)
class ChainProfile:
    name: str
    block_gen_time_s: float

    def __post_init__(self) -> None:
        if not self.block_gen_time_s > 0:
            raise ValueError(f"{self.name}: block generation time must be > 0")


BUILTIN_PROFILES = (
    ChainProfile("Bitcoin", 545.52),
    ChainProfile("Ethereum", 14.58),
    ChainProfile("Litecoin", 149.82),
    ChainProfile("Siacoin", 600.00),
    ChainProfile("Monero", 121.56),
    ChainProfile("Zcash", 150.00),
    ChainProfile("Peercoin", 484.38),
    ChainProfile("Dogecoin", 62.52),
)


def fit_misc(block_s: float = REFERENCE[1], vader_s: float = REFERENCE[2], bme_s: float = REFERENCE[3],
             n_files: int = REFERENCE_FILES) -> tuple[float, float]:
    """Per-file constants left after removing the block waits from a measured row."""
    return vader_s - 2 * block_s / n_files, bme_s - 3 * block_s


MISC_VADER_S, MISC_BME_S = fit_misc()


def project(profile: ChainProfile, n_files: int, misc_vader_s: float = MISC_VADER_S,
            misc_bme_s: float = MISC_BME_S) -> tuple[float, float]:
    if n_files < 1:
        raise ValueError("n_files must be >= 1")
    bg = profile.block_gen_time_s
    return 2 * bg / n_files + misc_vader_s, 3 * bg + misc_bme_s


def throughput_mbps(file_bytes: int, seconds: float) -> float:
    if not seconds > 0:
        raise ValueError("seconds must be > 0")
    return file_bytes * 8 / seconds / 1e6


class ProfileError(ValueError):
    pass


def load_profiles(path: str | Path) -> list[ChainProfile]:
    """Read profiles from CSV (``name,block_gen_time_s``) or a JSON list/object."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProfileError(f"cannot read {path}: {exc.strerror}") from None
    if not text.strip():
        raise ProfileError(f"{path}: no profiles")
    try:
        if text.lstrip()[0] in "[{":
            data = json.loads(text)
            items = data.items() if isinstance(data, dict) else [(d["name"], d["block_gen_time_s"]) for d in data]
        else:
            rows = list(csv.reader(io.StringIO(text)))
            if rows and rows[0] and rows[0][0].strip().lower() == "name":
                rows = rows[1:]
            items = [(r[0].strip(), r[1]) for r in rows if r]
        profiles = [ChainProfile(str(name), float(bg)) for name, bg in items]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProfileError(f"{path}: {exc}") from None
    if not profiles:
        raise ProfileError(f"{path}: no profiles")
    return profiles


def table(profiles=BUILTIN_PROFILES, n_files: int = REFERENCE_FILES,
          file_bytes: int = FILE_BYTES) -> list[dict[str, object]]:
    rows = []
    for p in profiles:
        v, b = project(p, n_files)
        rows.append({"chain": p.name, "block_gen_time_s": p.block_gen_time_s, "vader_s": v, "bme_s": b,
                     "vader_mbps": throughput_mbps(file_bytes, v), "bme_mbps": throughput_mbps(file_bytes, b)})
    return rows


def table_csv(rows: list[dict[str, object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["chain", "block_gen_time_s", "vader_s", "bme_s", "vader_mbps", "bme_mbps"])
    for r in rows:
        w.writerow([r["chain"], f"{r['block_gen_time_s']:.2f}", f"{r['vader_s']:.2f}", f"{r['bme_s']:.2f}",
                    f"{r['vader_mbps']:.2f}", f"{r['bme_mbps']:.3f}"])
    return buf.getvalue()

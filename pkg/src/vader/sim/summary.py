"""Paired comparisons of metrics tables: per-buyer statistics, overhead and CDFs."""

from __future__ import annotations

from dataclasses import dataclass
from statistics import mean, median
from typing import Iterable, Protocol, Sequence


class _RowLike(Protocol):
    buyer_id: int
    file_index: int
    e2e_ms: object


class PairingError(ValueError):
    pass


def per_buyer(rows: Iterable[_RowLike], stat=median) -> dict[int, float]:
    groups: dict[int, list[float]] = {}
    for r in rows:
        groups.setdefault(r.buyer_id, []).append(float(r.e2e_ms))
    return {b: stat(v) for b, v in sorted(groups.items())}


def check_pairing(a: Sequence[_RowLike], b: Sequence[_RowLike]) -> None:
    ka = sorted((r.buyer_id, r.file_index) for r in a)
    kb = sorted((r.buyer_id, r.file_index) for r in b)
    if ka != kb:
        missing = sorted(set(ka) ^ set(kb))[:3]
        raise PairingError(f"runs are not paired; differing (buyer, file) keys such as {missing}")


def percentile(values: Sequence[float], q: float) -> float:
    """Linear-interpolated percentile, ``q`` in [0, 100]."""
    if not values:
        raise ValueError("no values")
    xs = sorted(values)
    pos = (len(xs) - 1) * q / 100
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def cdf(values: Sequence[float]) -> list[tuple[float, float]]:
    xs = sorted(values)
    n = len(xs)
    return [(x, (i + 1) / n) for i, x in enumerate(xs)]


@dataclass(frozen=True)
class Comparison:
    """Overhead of run ``a`` relative to baseline run ``b`` (ratio minus one)."""

    overheads: dict[int, float]
    median_overhead: float
    p10: float
    p90: float
    mean_file_overhead: float

    def cdf(self) -> list[tuple[float, float]]:
        return cdf(list(self.overheads.values()))


def compare(a: Sequence[_RowLike], b: Sequence[_RowLike]) -> Comparison:
    check_pairing(a, b)
    med_a, med_b = per_buyer(a), per_buyer(b)
    overheads = {k: med_a[k] / med_b[k] - 1 for k in med_a}
    vals = list(overheads.values())
    mean_a, mean_b = per_buyer(a, mean), per_buyer(b, mean)
    per_file = mean(mean_a[k] / mean_b[k] - 1 for k in mean_a)
    return Comparison(overheads, median(vals), percentile(vals, 10), percentile(vals, 90), per_file)

"""Per-exchange timing rows and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

HEADER = ("buyer_id", "file_index", "protocol", "e2e_ms", "protocol_ms", "transfer_ms", "verify_ms",
          "commits", "outcome")


@dataclass(frozen=True)
class MetricsRecord:
    buyer_id: int
    file_index: int
    protocol: str
    e2e_ms: Fraction
    protocol_ms: Fraction
    transfer_ms: Fraction
    verify_ms: Fraction
    commits: int
    outcome: str
    chain_ms: Fraction = Fraction(0)
    facilitator_id: int = -1

    def partition_error(self) -> Fraction:
        return self.e2e_ms - (self.protocol_ms + self.transfer_ms + self.verify_ms)

    def row(self) -> list[str]:
        return [str(self.buyer_id), str(self.file_index), self.protocol, fmt_ms(self.e2e_ms),
                fmt_ms(self.protocol_ms), fmt_ms(self.transfer_ms), fmt_ms(self.verify_ms),
                str(self.commits), self.outcome]


def fmt_ms(x: Fraction) -> str:
    return f"{float(x):.6f}"


def to_csv(records: list[MetricsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in sorted(records, key=lambda r: (r.buyer_id, r.file_index)):
        w.writerow(r.row())
    return buf.getvalue()


@dataclass(frozen=True)
class Row:
    """A metrics row read back from CSV (floats, no exact partition)."""

    buyer_id: int
    file_index: int
    protocol: str
    e2e_ms: float
    protocol_ms: float
    transfer_ms: float
    verify_ms: float
    commits: int
    outcome: str


class MetricsFormatError(ValueError):
    pass


def read_csv(text: str) -> list[Row]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MetricsFormatError("empty metrics file") from None
    if tuple(header) != HEADER:
        raise MetricsFormatError(f"unexpected header {header!r}")
    rows = []
    for n, fields in enumerate(reader, start=2):
        if len(fields) != len(HEADER):
            raise MetricsFormatError(f"line {n}: expected {len(HEADER)} fields")
        try:
            rows.append(Row(int(fields[0]), int(fields[1]), fields[2], float(fields[3]), float(fields[4]),
                            float(fields[5]), float(fields[6]), int(fields[7]), fields[8]))
        except ValueError as exc:
            raise MetricsFormatError(f"line {n}: {exc}") from None
    return rows

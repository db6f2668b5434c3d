"""Median e2e per buyer as the share of cheating facilitators grows.

Buyers served only by honest facilitators should not notice; the rest pay a
dispute window on every bad exchange.

    python scripts/malicious_sweep.py --fractions 0 0.1 0.3 0.5
"""

from __future__ import annotations

import argparse
import csv
import sys
from statistics import median

from vader.protocols import SUCCESS
from vader.sim.config import ScenarioConfig
from vader.sim.scenario import run_scenario


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.0, 0.1, 0.3, 0.5])
    ap.add_argument("--buyers", type=int, default=20)
    ap.add_argument("--facilitators", type=int, default=10)
    ap.add_argument("--files", type=int, default=10)
    ap.add_argument("--tau", type=int, default=10)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["fraction", "buyer", "affected", "median_e2e_ms", "disputes"])
    for frac in args.fractions:
        cfg = ScenarioConfig(n_buyers=args.buyers, n_facilitators=args.facilitators, files_per_buyer=args.files,
                             malicious_f_fraction=frac, tau=args.tau, seed=args.seed)
        r = run_scenario(cfg)
        for i, o in enumerate(r.outcomes):
            bad = sum(1 for x in o.exchanges if x.outcome != SUCCESS)
            med = float(median(x.e2e_ms for x in o.exchanges))
            w.writerow([frac, i, int(bad > 0), f"{med:.2f}", bad])


if __name__ == "__main__":
    main()

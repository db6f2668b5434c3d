"""Per-file cost of VADER and BME against VANILLA as the session grows.

    python scripts/amortization.py --files 5 10 50 200 --buyers 5
"""

from __future__ import annotations

import argparse
import csv
import sys

from vader.sim.config import ScenarioConfig
from vader.sim.scenario import run_scenario
from vader.sim.summary import compare


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--files", type=int, nargs="+", default=[5, 10, 50, 200])
    ap.add_argument("--buyers", type=int, default=5)
    ap.add_argument("--block-interval", type=float, default=1000)
    ap.add_argument("--topology", choices=("cdn", "random"), default="cdn")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["files", "protocol", "mean_e2e_ms", "mean_chain_ms", "mean_file_overhead", "median_overhead"])
    for n in args.files:
        base = ScenarioConfig(n_buyers=args.buyers, n_facilitators=5, files_per_buyer=n, seed=args.seed,
                              block_interval=args.block_interval, topology=args.topology)
        plain = run_scenario(base.replace(protocol="vanilla"))
        for proto in ("vader", "bme"):
            r = run_scenario(base.replace(protocol=proto))
            cmp = compare(r.metrics, plain.metrics)
            xs = [x for o in r.outcomes for x in o.exchanges]
            e2e = float(sum(x.e2e_ms for x in xs) / len(xs))
            chain = float(sum(x.chain_ms for x in xs) / len(xs))
            w.writerow([n, proto, f"{e2e:.2f}", f"{chain:.2f}", f"{cmp.mean_file_overhead:.4f}",
                        f"{cmp.median_overhead:.4f}"])
            sys.stdout.flush()


if __name__ == "__main__":
    main()

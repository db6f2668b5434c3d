"""``vader`` command line: run a scenario, project chain latencies, compare runs.

Exit codes: 0 success, 1 fairness violation, 2 bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import estimator
from .sim.config import ConfigError, load_config
from .sim.metrics import MetricsFormatError, read_csv
from .sim.summary import PairingError, compare

EXIT_OK, EXIT_UNFAIR, EXIT_INPUT = 0, 1, 2


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_run(args: argparse.Namespace) -> int:
    from .sim.scenario import run_scenario

    overrides = list(args.override or [])
    if args.protocol:
        overrides.append(f'protocol="{args.protocol}"')
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    result = run_scenario(cfg, trace=args.trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {
        "metrics.csv": result.metrics_csv(),
        "fairness.json": result.fairness_json(),
        "ledger.json": result.ledger_json(),
    }
    if args.trace:
        artifacts["trace.jsonl"] = result.world.trace.to_jsonl()
        artifacts["sessions.jsonl"] = result.sessions_jsonl()
    for name, text in artifacts.items():
        (out / name).write_text(text)
    manifest = {
        "config": None if args.config is None else str(args.config),
        "overrides": overrides,
        "seed": cfg.seed,
        "protocol": cfg.protocol,
        "out": str(out),
        "artifacts": {name: _sha256(out / name) for name in sorted(artifacts)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    report = result.fairness
    rows = len(result.metrics)
    print(f"{cfg.protocol}: {rows} exchanges, {len(report.violations)} fairness violations -> {out}")
    for v in report.violations[:10]:
        print(f"  violation: {json.dumps(v, sort_keys=True)}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_UNFAIR


def cmd_estimate(args: argparse.Namespace) -> int:
    if args.files < 1:
        print("--files must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    profiles = estimator.BUILTIN_PROFILES
    if args.profiles:
        try:
            profiles = estimator.load_profiles(args.profiles)
        except estimator.ProfileError as exc:
            print(f"profile error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    sys.stdout.write(estimator.table_csv(estimator.table(profiles, args.files)))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        a = read_csv(Path(args.a).read_text())
        b = read_csv(Path(args.b).read_text())
        cmp = compare(a, b)
    except (OSError, MetricsFormatError, PairingError) as exc:
        print(f"compare error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"buyers={len(cmp.overheads)}")
    print(f"median_overhead={cmp.median_overhead:.4f}")
    print(f"p10_overhead={cmp.p10:.4f}")
    print(f"p90_overhead={cmp.p90:.4f}")
    print(f"mean_file_overhead={cmp.mean_file_overhead:.4f}")
    if args.cdf:
        lines = ["overhead,fraction"] + [f"{x:.6f},{p:.6f}" for x, p in cmp.cdf()]
        Path(args.cdf).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vader", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its artifacts")
    run.add_argument("--config", help="TOML file with ScenarioConfig keys")
    run.add_argument("--protocol", choices=("vader", "bme", "vanilla"))
    run.add_argument("--seed", type=int)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--override", action="append", metavar="KEY=VALUE")
    run.add_argument("--trace", action="store_true", help="also write trace.jsonl and sessions.jsonl")
    run.set_defaults(func=cmd_run)

    est = sub.add_parser("estimate", help="project per-file latency on public chains")
    est.add_argument("--files", type=int, default=estimator.REFERENCE_FILES)
    est.add_argument("--profiles", help="CSV or JSON chain profiles")
    est.set_defaults(func=cmd_estimate)

    cmp = sub.add_parser("compare", help="overhead of run A relative to baseline run B")
    cmp.add_argument("--a", required=True)
    cmp.add_argument("--b", required=True)
    cmp.add_argument("--cdf", help="write per-buyer overhead CDF points here")
    cmp.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

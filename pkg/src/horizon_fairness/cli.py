"""Command line entry point: ``hfair run | validate | presets list``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import BENCHMARKS, ConfigError, parse_config

SCENARIO_DIR = Path(__file__).parent / "data" / "scenarios"


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    shipped = SCENARIO_DIR / f"{path}.yaml"
    return shipped if shipped.exists() else p


def _benchmarks(text: str) -> tuple:
    items = tuple(s for s in text.split(",") if s)
    bad = [s for s in items if s not in BENCHMARKS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown benchmarks {bad}; choose from {list(BENCHMARKS)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hfair", description="Online horizon-fair allocation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", help="config file or shipped scenario name")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--seed", type=int, help="master seed (overrides the config)")
    run.add_argument("--benchmarks", type=_benchmarks, help="comma list from hf,sf,util,pareto")
    val = sub.add_parser("validate", help="parse and validate a config")
    val.add_argument("config")
    pre = sub.add_parser("presets", help="list shipped topologies and scenarios")
    pre.add_argument("action", choices=["list"])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "presets":
        from .cache import list_presets

        print("topologies:", " ".join(list_presets()))
        print("scenarios:", " ".join(sorted(p.stem for p in SCENARIO_DIR.glob("*.yaml"))))
        return 0
    try:
        cfg = parse_config(_resolve(args.config))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"{cfg.source}: ok ({cfg.scenario}, policy={cfg.policy}, T={cfg.horizon})")
        return 0

    from .runner import InvariantViolation, run_experiment

    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed, trace=dataclasses.replace(cfg.trace, seed=args.seed))
    if args.benchmarks is not None:
        cfg = dataclasses.replace(cfg, benchmarks=args.benchmarks)
    out = args.out or cfg.output or f"runs/{cfg.scenario}"
    try:
        res = run_experiment(cfg, out_dir=out)
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    s = res.summary
    print(f"{cfg.scenario}: avg utilities {[round(u, 4) for u in s['avg_utilities']]}"
          + (f", regret {s['regret']:.4g}" if "regret" in s else "")
          + (f", PoF {s['pof']:.4g}" if s.get("pof") is not None else ""))
    print(f"outputs written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

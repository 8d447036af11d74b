"""Run every shipped scenario and print one line per run."""
import argparse
import time
from pathlib import Path

from horizon_fairness.cli import SCENARIO_DIR
from horizon_fairness.config import parse_config
from horizon_fairness.runner import run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs")
    ap.add_argument("--only", nargs="*", help="scenario names to run")
    args = ap.parse_args()
    for path in sorted(SCENARIO_DIR.glob("*.yaml")):
        if args.only and path.stem not in args.only:
            continue
        cfg = parse_config(path)
        t0 = time.perf_counter()
        s = run_experiment(cfg, out_dir=Path(args.out) / cfg.scenario).summary
        reg = s.get("regret", float("nan"))
        pof = s.get("pof")
        print(f"{cfg.scenario:32s} avg={[round(u, 4) for u in s['avg_utilities']]} regret={reg:.4g} "
              f"pof={pof if pof is None else round(pof, 4)} clamps={s['clamp_count']} "
              f"violations={s['invariant_violations']} {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()

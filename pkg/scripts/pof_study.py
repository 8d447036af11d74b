"""Price of fairness of OHF on Tree-1..3 (2-4 agents) for alpha in {1, 2, 3}."""
import argparse
import json

import yaml

from horizon_fairness.config import parse_config_text
from horizon_fairness.runner import run_experiment

SIGMAS = [1.2, 0.8, 0.6, 1.0]


def tree_config(n_agents: int, alpha: float, horizon: int, seed: int = 0):
    d = {
        "scenario": f"tree{n_agents - 1}_a{alpha:g}",
        "policy": "ohf",
        "topology": f"tree{n_agents - 1}",
        "horizon": horizon,
        "seed": seed,
        "fairness": {"alpha": alpha},
        "trace": {"kind": "stationary", "agents": [{"sigma": s} for s in SIGMAS[:n_agents]]},
        "benchmarks": ["hf", "util"],
    }
    return parse_config_text(yaml.safe_dump(d), d["scenario"])


def study(horizon=10_000, alphas=(1.0, 2.0, 3.0), agents=(2, 3, 4), seed=0):
    rows = []
    for a in alphas:
        for n in agents:
            s = run_experiment(tree_config(n, a, horizon, seed)).summary
            rows.append({"alpha": a, "agents": n, "pof": s["pof"], "pof_hf": s["pof_hf"],
                         "avg": s["avg_utilities"], "hf": s["benchmark_hf"]["avg_utilities"]})
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--horizon", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for r in study(args.horizon, seed=args.seed):
        print(json.dumps(r))

"""Regenerate the shipped topology presets.

Edge costs and capacities are drawn once from fixed seeds and frozen into
YAML: costs uniform on {1..5}, repository edges on {6..10}, capacities on
{1..5}. Cycle uses its fixed costs and capacity 5 everywhere.
"""
from pathlib import Path

import numpy as np
import yaml

from horizon_fairness.cache import TOPOLOGY_DIR, network_from_dict, randomize_topology

TREE_EDGES = [[0, 1], [1, 2], [1, 3], [1, 4], [2, 5], [2, 6], [2, 7], [3, 8], [3, 9], [3, 10], [4, 11], [4, 12]]
# Tree-1..3 share one network and add one agent at a time; each new agent
# brings two query nodes (and its own request stream) to the same caches
TREE_AGENTS = {
    "tree1": [
        {"caches": [1, 2, 5, 6, 7], "query_nodes": [5, 6]},
        {"caches": [3, 4, 8, 9, 10, 11, 12], "query_nodes": [8, 9]},
    ],
    "tree2": [
        {"caches": [1, 2, 5, 6, 7], "query_nodes": [5, 6]},
        {"caches": [3, 8, 9, 10], "query_nodes": [8, 9]},
        {"caches": [4, 11, 12], "query_nodes": [11, 12]},
    ],
    "tree3": [
        {"caches": [1, 2, 5, 6], "query_nodes": [5, 6]},
        {"caches": [3, 8, 9], "query_nodes": [8, 9]},
        {"caches": [4, 11, 12], "query_nodes": [11, 12]},
        {"caches": [7, 10], "query_nodes": [7, 10]},
    ],
}
TREE_SEED = 0

GRID_EDGES = [[1, 2], [2, 3], [4, 5], [5, 6], [7, 8], [8, 9], [1, 4], [4, 7], [2, 5], [5, 8], [3, 6], [6, 9]]
ABILENE_EDGES = [[k, k % 12 + 1] for k in range(1, 13)] + [[3, 9]]
GEANT_EDGES = [[k, k % 22 + 1] for k in range(1, 23)] + [
    [1, 12], [2, 8], [3, 15], [4, 19], [5, 10], [6, 17], [7, 21], [9, 14], [11, 18], [13, 20], [16, 22]
]

SKELETONS = {
    "grid": {
        "nodes": list(range(1, 10)),
        "edges": GRID_EDGES,
        "repositories": {9: "all"},
        "agents": [
            {"caches": [1, 2, 4, 5], "query_nodes": [1, 2]},
            {"caches": [3, 6, 7, 8], "query_nodes": [3, 7]},
        ],
    },
    "abilene": {
        "nodes": list(range(1, 13)),
        "edges": ABILENE_EDGES,
        "repositories": {6: "all", 12: "all"},
        "agents": [
            {"caches": [1, 2, 3, 4, 5], "query_nodes": [1, 4]},
            {"caches": [7, 8, 9, 10, 11], "query_nodes": [8, 10]},
        ],
    },
    "geant": {
        "nodes": list(range(1, 23)),
        "edges": GEANT_EDGES,
        "repositories": {11: "all", 22: "all"},
        "agents": [
            {"caches": [1, 2, 3, 4, 5, 6, 7], "query_nodes": [2, 4, 6]},
            {"caches": [8, 9, 10, 12, 13, 14, 15], "query_nodes": [9, 13, 15]},
            {"caches": [16, 17, 18, 19, 20, 21], "query_nodes": [17, 19, 20]},
        ],
    },
}

CYCLE = {
    "name": "cycle",
    "nodes": [1, 2, 3],
    "edges": [[1, 2, 1], [1, 3, 2], [2, 3, 2]],
    "capacities": {1: 5, 2: 5, 3: 0},
    "repositories": {3: "all"},
    "agents": [{"caches": [1], "query_nodes": [1]}, {"caches": [2], "query_nodes": [2]}],
}


def build(seed: int = 2024) -> dict:
    out = {"cycle": CYCLE}
    tree = randomize_topology(
        {"nodes": list(range(13)), "edges": TREE_EDGES, "repositories": {0: "all"},
         "agents": TREE_AGENTS["tree1"]},
        np.random.default_rng(TREE_SEED),
    )
    for name, agents in TREE_AGENTS.items():
        out[name] = {**tree, "name": name, "agents": agents}
    for name, sk in SKELETONS.items():
        out[name] = {"name": name, **randomize_topology(sk, np.random.default_rng([seed, len(name)]))}
    return out


def main(dest: Path = TOPOLOGY_DIR) -> None:
    dest.mkdir(parents=True, exist_ok=True)
    for name, d in build().items():
        network_from_dict(d, 20)  # validates
        with open(dest / f"{name}.yaml", "w") as fh:
            fh.write(f"# {name} topology preset (frozen by scripts/make_presets.py)\n")
            yaml.safe_dump(d, fh, sort_keys=False, default_flow_style=None)
        print("wrote", dest / f"{name}.yaml")


if __name__ == "__main__":
    main()

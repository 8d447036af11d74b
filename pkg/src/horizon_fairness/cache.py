"""Multi-agent cache networks.

A request for file ``f`` at query node ``c`` walks the retrieval order of
``(c, f)``: the caches sorted by shortest-path cost from ``c`` up to the
nearest repository of ``f``. The caching utility of a fractional state ``x``
is the retrieval cost it saves with respect to the repository-only state.

Coordinates of ``x`` are laid out node-major: ``x[node_index * F + f]``.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .domains import CappedSimplexDomain, ProductDomain
from .policy import StepRecord, UtilityFeedback
from .sequences import UtilitySequence

TOPOLOGY_DIR = Path(__file__).parent / "data" / "topologies"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    caches: tuple
    query_nodes: tuple


@dataclass(frozen=True)
class RetrievalOrder:
    """Nodes ``Phi(1..phi)`` and their shortest-path costs from ``Phi(1)``."""

    nodes: tuple
    costs: tuple

    @property
    def increments(self) -> np.ndarray:
        return np.diff(np.asarray(self.costs, dtype=float))


class CacheNetwork:
    """Static weighted cache graph with repositories and agent ownership.

    Args:
        nodes: node ids.
        edges: ``(a, b, weight)`` triples of an undirected graph.
        capacities: node id -> capacity ``k_c`` (missing nodes get 0).
        repositories: node id -> 0-based file ids stored permanently, or
            ``None`` for the whole catalog.
        agents: one :class:`AgentSpec` per agent.
        catalog_size: ``F``.
    """

    def __init__(self, nodes, edges, capacities, repositories, agents, catalog_size, name=""):
        self.name = name
        self.nodes = tuple(int(n) for n in nodes)
        if len(set(self.nodes)) != len(self.nodes):
            raise TopologyError("duplicate node ids")
        self.index = {n: k for k, n in enumerate(self.nodes)}
        self.F = int(catalog_size)
        if self.F < 1:
            raise TopologyError("catalog must be nonempty")
        n = len(self.nodes)

        self.edges = []
        for a, b, w in edges:
            if a not in self.index or b not in self.index:
                raise TopologyError(f"edge ({a}, {b}) references an unknown node")
            if not w > 0:
                raise TopologyError(f"edge ({a}, {b}) has nonpositive weight {w}")
            self.edges.append((int(a), int(b), float(w)))

        self.capacity = np.zeros(n)
        for node, k in (capacities or {}).items():
            if node not in self.index:
                raise TopologyError(f"capacity for unknown node {node}")
            if k < 0:
                raise TopologyError(f"negative capacity at node {node}")
            self.capacity[self.index[node]] = k

        self.pinned = np.zeros((n, self.F), dtype=bool)
        for node, files in (repositories or {}).items():
            if node not in self.index:
                raise TopologyError(f"repository at unknown node {node}")
            files = range(self.F) if files is None else files
            for f in files:
                if not 0 <= f < self.F:
                    raise TopologyError(f"repository file {f} outside catalog")
                self.pinned[self.index[node], f] = True

        self.agents = tuple(AgentSpec(tuple(a.caches), tuple(a.query_nodes)) for a in agents)
        if not self.agents:
            raise TopologyError("at least one agent is required")
        owner = {}
        for i, a in enumerate(self.agents):
            for c in a.caches:
                if c not in self.index:
                    raise TopologyError(f"agent {i} owns unknown node {c}")
                if c in owner:
                    raise TopologyError(f"node {c} owned by agents {owner[c]} and {i}")
                owner[c] = i
            if not a.query_nodes:
                raise TopologyError(f"agent {i} has no query nodes")
            for q in a.query_nodes:
                if owner.get(q) != i:
                    raise TopologyError(f"query node {q} of agent {i} is not one of its caches")
        # full repositories may stay unowned: they hold no decision variables
        for c in self.nodes:
            if c not in owner and not self.pinned[self.index[c]].all():
                raise TopologyError(f"node {c} is owned by no agent")
        self.owner = owner

        W = np.zeros((n, n))
        for a, b, w in self.edges:
            i, j = self.index[a], self.index[b]
            W[i, j] = W[j, i] = w if W[i, j] == 0 else min(W[i, j], w)
        self.dist = dijkstra(csr_matrix(W), directed=False)

        self._build_orders()

    # -- structure -------------------------------------------------------

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def dim(self) -> int:
        return len(self.nodes) * self.F

    def coord(self, node, f) -> int:
        return self.index[node] * self.F + f

    def shortest_path_costs(self, source) -> dict:
        row = self.dist[self.index[source]]
        return {n: float(row[k]) for n, k in self.index.items()}

    def domain(self) -> ProductDomain:
        return ProductDomain(
            tuple(
                CappedSimplexDomain(self.F, float(self.capacity[k]), self.pinned[k])
                for k in range(len(self.nodes))
            )
        )

    def x0(self) -> np.ndarray:
        """Repository-only state."""
        return self.pinned.astype(float).reshape(-1)

    def retrieval_order(self, query_node, f) -> RetrievalOrder:
        return self.orders[(query_node, f)]

    def _build_orders(self) -> None:
        self.orders = {}
        pairs, agent_of = [], []
        for i, a in enumerate(self.agents):
            for c in a.query_nodes:
                ci = self.index[c]
                d = self.dist[ci]
                for f in range(self.F):
                    repos = np.flatnonzero(self.pinned[:, f])
                    if repos.size == 0:
                        raise TopologyError(f"file {f} has no repository")
                    best = d[repos].min()
                    if not np.isfinite(best):
                        raise TopologyError(f"file {f} unreachable from query node {c}")
                    # repository boundary: cheapest repository, lowest id on ties
                    term = min((d[r], self.nodes[r]) for r in repos)[1]
                    prefix = sorted(
                        (d[k], self.nodes[k]) for k in range(len(self.nodes)) if d[k] < best
                    )
                    nodes = tuple(nd for _, nd in prefix) + (term,)
                    costs = tuple(float(cost) for cost, _ in prefix) + (float(best),)
                    self.orders[(c, f)] = RetrievalOrder(nodes, costs)
                    pairs.append((c, f))
                    agent_of.append(i)
        self.pairs = pairs
        self.pair_index = {p: k for k, p in enumerate(pairs)}
        self.pair_agent = np.array(agent_of)
        P = len(pairs)
        L = max(1, max(len(o.nodes) - 1 for o in self.orders.values()))
        self.idx = np.zeros((P, L), dtype=np.int64)
        self.delta = np.zeros((P, L))
        self.repo_cost = np.zeros(P)
        for p, (c, f) in enumerate(pairs):
            o = self.orders[(c, f)]
            m = len(o.nodes) - 1
            self.idx[p, :m] = [self.coord(nd, f) for nd in o.nodes[:m]]
            self.delta[p, :m] = o.increments
            self.repo_cost[p] = o.costs[-1]
        self.agent_matrix = np.zeros((self.n_agents, P))
        self.agent_matrix[self.pair_agent, np.arange(P)] = 1.0

    @property
    def max_repo_cost(self) -> float:
        return float(self.repo_cost.max())

    # -- utilities -------------------------------------------------------

    def pair_gains(self, x) -> np.ndarray:
        """Per-pair saving ``sum_k dw_k min(1, sum_{k'<=k} x)`` for one request."""
        cum = np.cumsum(np.asarray(x, dtype=float)[self.idx], axis=1)
        return (self.delta * np.minimum(1.0, cum)).sum(axis=1)

    def pair_coefficients(self, x) -> np.ndarray:
        """``coef[p, k']``: derivative of pair ``p``'s gain along its ``k'``-th cache."""
        cum = np.cumsum(np.asarray(x, dtype=float)[self.idx], axis=1)
        active = self.delta * (cum < 1.0)
        return np.cumsum(active[:, ::-1], axis=1)[:, ::-1]

    def utilities(self, x, counts) -> np.ndarray:
        return self.agent_matrix @ (np.asarray(counts, dtype=float) * self.pair_gains(x))

    def supergradients(self, x, counts) -> np.ndarray:
        coef = self.pair_coefficients(x)
        counts = np.asarray(counts, dtype=float)
        out = np.empty((self.n_agents, self.dim))
        for i in range(self.n_agents):
            w = counts * (self.pair_agent == i)
            out[i] = np.bincount(self.idx.ravel(), (w[:, None] * coef).ravel(), minlength=self.dim)
        return out

    def cost(self, x, counts) -> np.ndarray:
        """Per-agent retrieval cost, computed from the missing file fractions."""
        cum = np.cumsum(np.asarray(x, dtype=float)[self.idx], axis=1)
        miss = (self.delta * (1.0 - np.minimum(1.0, cum))).sum(axis=1)
        return self.agent_matrix @ (np.asarray(counts, dtype=float) * miss)

    def counts_from_events(self, events, horizon: int | None = None) -> np.ndarray:
        """``(T, P)`` request counts from per-slot ``(node, file)`` lists."""
        T = len(events) if horizon is None else horizon
        counts = np.zeros((T, len(self.pairs)))
        for t in range(T):
            slot = np.asarray(events[t], dtype=np.int64).reshape(-1, 2)
            if slot.size == 0:
                continue
            try:
                cols = [self.pair_index[(int(c), int(f))] for c, f in slot]
            except KeyError as e:
                raise TopologyError(f"slot {t + 1}: request {e.args[0]} is not at a query node") from None
            np.add.at(counts[t], cols, 1.0)
        return counts


class CacheSequence(UtilitySequence):
    """Replayable caching utilities ``scale * u_t(x)`` for recorded request counts."""

    def __init__(self, net: CacheNetwork, counts, scale: float = 1.0):
        self.net = net
        self.counts = np.atleast_2d(np.asarray(counts, dtype=float))
        self.scale = float(scale)
        self.n_agents = net.n_agents
        self.dim = net.dim

    def __len__(self):
        return self.counts.shape[0]

    def feedback(self, t, x):
        c = self.counts[t]
        return UtilityFeedback(
            self.scale * self.net.utilities(x, c), self.scale * self.net.supergradients(x, c)
        )

    def slot_values(self, x):
        g = self.net.pair_gains(x)
        return self.scale * (self.counts * g) @ self.net.agent_matrix.T

    def weighted_gradient(self, x, W):
        W = np.asarray(W, dtype=float)
        v = (W[:, self.net.pair_agent] * self.counts).sum(axis=0) * self.scale
        coef = self.net.pair_coefficients(x)
        return np.bincount(self.net.idx.ravel(), (v[:, None] * coef).ravel(), minlength=self.dim)

    def prefix(self, T):
        return CacheSequence(self.net, self.counts[:T], self.scale)

    def mean_sequence(self):
        return CacheSequence(self.net, self.counts.mean(axis=0, keepdims=True), self.scale)

    def cost(self, t, x):
        return self.scale * self.net.cost(x, self.counts[t])


def utility_scale(net: CacheNetwork, batch_size: int) -> float:
    """Map utilities into ``[0, 1]``: one agent saves at most ``R * max cost`` per slot."""
    return 1.0 / (batch_size * net.max_repo_cost)


# ---------------------------------------------------------------------------
# path replication baselines


class ReplicationPolicy:
    """Integral caches with path replication and LRU or LFU eviction.

    A request is served by the first node of its retrieval order storing the
    file (the repository at worst); every strictly cheaper cache inserts the
    file, evicting a victim when full. LFU counts persist across evictions and
    ties evict the lowest file id.
    """

    def __init__(self, net: CacheNetwork, kind: str = "lru"):
        if kind not in ("lru", "lfu"):
            raise ValueError(f"unknown replication policy {kind!r}")
        self.name = kind
        self.net = net
        self.kind = kind
        n = len(net.nodes)
        self.cap = [int(k) for k in net.capacity]
        self.store = [OrderedDict() for _ in range(n)]
        self.freq = np.zeros((n, net.F), dtype=np.int64)
        self._orders = {
            key: ([net.index[v] for v in o.nodes], o.costs) for key, o in net.orders.items()
        }
        self.t = 1
        self.last = StepRecord(np.nan, np.nan)

    def x(self) -> np.ndarray:
        x = self.net.pinned.astype(float)
        for k, files in enumerate(self.store):
            for f in files:
                x[k, f] = 1.0
        return x.reshape(-1)

    def next(self) -> np.ndarray:
        return self.x()

    def _holds(self, k, f) -> bool:
        return self.net.pinned[k, f] or f in self.store[k]

    def _touch(self, k, f) -> None:
        if self.net.pinned[k, f]:
            return
        self.freq[k, f] += 1
        if self.kind == "lru":
            self.store[k].move_to_end(f)

    def _insert(self, k, f) -> None:
        if self.net.pinned[k, f] or self.cap[k] < 1:
            return
        self.freq[k, f] += 1
        s = self.store[k]
        if f in s:
            s.move_to_end(f)
            return
        if len(s) >= self.cap[k]:
            if self.kind == "lru":
                s.popitem(last=False)
            else:
                victim = min(s, key=lambda g: (self.freq[k, g], g))
                del s[victim]
        s[f] = None

    def request(self, node, f) -> None:
        ks, costs = self._orders[(node, f)]
        for j, k in enumerate(ks):
            if self._holds(k, f):
                break
        self._touch(k, f)
        hit_cost = costs[j]
        for jj in range(j):
            if costs[jj] < hit_cost:
                self._insert(ks[jj], f)

    def update(self, fb=None, requests=()) -> StepRecord:
        for node, f in requests:
            self.request(int(node), int(f))
        self.t += 1
        return self.last


# ---------------------------------------------------------------------------
# topology files


def _files(spec, F):
    if spec in (None, "all"):
        return None
    return [int(f) - 1 for f in spec]


def network_from_dict(d: dict, catalog_size: int) -> CacheNetwork:
    """Build a network from a topology mapping (1-based file ids)."""
    try:
        return CacheNetwork(
            nodes=d["nodes"],
            edges=[tuple(e) for e in d["edges"]],
            capacities={int(k): v for k, v in (d.get("capacities") or {}).items()},
            repositories={int(k): _files(v, catalog_size) for k, v in d["repositories"].items()},
            agents=[AgentSpec(tuple(a["caches"]), tuple(a["query_nodes"])) for a in d["agents"]],
            catalog_size=catalog_size,
            name=d.get("name", ""),
        )
    except KeyError as e:
        raise TopologyError(f"topology missing key {e.args[0]!r}") from None


def list_presets() -> list[str]:
    return sorted(p.stem for p in TOPOLOGY_DIR.glob("*.yaml"))


def load_topology(name_or_path, catalog_size: int = 20) -> CacheNetwork:
    p = Path(name_or_path)
    if not p.exists():
        p = TOPOLOGY_DIR / f"{name_or_path}.yaml"
        if not p.exists():
            raise TopologyError(f"unknown topology {name_or_path!r}; presets: {list_presets()}")
    with open(p) as fh:
        return network_from_dict(yaml.safe_load(fh), catalog_size)


def randomize_topology(d: dict, rng: np.random.Generator, cost_range=(1, 5), repo_cost_range=(6, 10),
                       capacity_range=(1, 5)) -> dict:
    """Redraw edge costs and capacities of a topology skeleton.

    Edges touching a repository node draw from ``repo_cost_range``, others from
    ``cost_range``; caches draw capacities from ``capacity_range`` (all bounds
    inclusive). Repository-only nodes keep capacity 0.
    """
    repos = {int(k) for k in d["repositories"]}
    out = dict(d)
    out["edges"] = [
        [a, b, int(rng.integers(*(repo_cost_range if (a in repos or b in repos) else cost_range), endpoint=True))]
        for a, b, *_ in d["edges"]
    ]
    owned = {c for a in d["agents"] for c in a["caches"]}
    out["capacities"] = {
        n: int(rng.integers(*capacity_range, endpoint=True)) if n in owned else 0 for n in d["nodes"]
    }
    return out

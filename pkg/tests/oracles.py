"""Independent brute-force oracles used by the test suite.

Nothing here imports the package's numerical kernels: each oracle recomputes
its quantity from first principles (enumeration, grids, direct simulation).
"""
from __future__ import annotations

import itertools

import numpy as np


# -- fairness ---------------------------------------------------------------


def f_alpha(alpha, u):
    u = np.asarray(u, dtype=float)
    return np.log(u) if alpha == 1 else (u ** (1.0 - alpha) - 1.0) / (1.0 - alpha)


def conjugate_by_stationarity(alpha, theta):
    """sup_u {u theta + f(u)} evaluated at its stationary point u = (-theta)^(-1/alpha)."""
    theta = np.asarray(theta, dtype=float)
    u = (-theta) ** (-1.0 / alpha)
    return u * theta + f_alpha(alpha, u)


def grid_fenchel(alpha, u, lo, hi, n=100_000, chunk=256):
    """Per-coordinate min over a log-spaced grid of Theta of conj(theta) - theta u."""
    grid = -np.geomspace(-hi, -lo, n)  # from -|hi| down to -|lo|
    conj = conjugate_by_stationarity(alpha, grid)
    u = np.asarray(u, dtype=float).reshape(-1)
    out = np.empty_like(u)
    for s in range(0, u.size, chunk):
        part = u[s:s + chunk]
        out[s:s + chunk] = np.min(conj[None, :] - grid[None, :] * part[:, None], axis=1)
    return out


# -- capped simplex ---------------------------------------------------------


def project_capped_simplex_enum(y, k, pinned=None):
    """Exact projection by enumerating every active set.

    Each free coordinate is at 0, at 1 or interior; the budget is active or
    not. Every face yields one candidate (the projection onto its affine
    hull); the closest feasible candidate is the projection.
    """
    y = np.asarray(y, dtype=float)
    F = y.size
    pinned = np.zeros(F, dtype=bool) if pinned is None else np.asarray(pinned, dtype=bool)
    free = np.flatnonzero(~pinned)
    best, best_d = None, np.inf
    for states in itertools.product((0, 1, 2), repeat=free.size):
        states = np.array(states, dtype=int)
        inner = free[states == 2]
        at_one = int(np.sum(states == 1))
        for budget in (False, True):
            x = np.ones(F)
            x[free[states == 0]] = 0.0
            if budget:
                if inner.size == 0:
                    continue
                lam = (y[inner].sum() + at_one - k) / inner.size
                if lam < -1e-15:
                    continue
                x[inner] = y[inner] - lam
            else:
                x[inner] = y[inner]
            xf = x[free]
            if np.any(xf < -1e-12) or np.any(xf > 1 + 1e-12) or xf.sum() > k + 1e-12:
                continue
            d = float(np.sum((x - y) ** 2))
            if d < best_d:
                best, best_d = x, d
    return best


# -- graphs and caches ------------------------------------------------------


def path_enumeration_costs(nodes, edges, source):
    """Shortest-path costs by enumerating all simple paths (tiny graphs only)."""
    adj = {n: [] for n in nodes}
    for a, b, w in edges:
        adj[a].append((b, w))
        adj[b].append((a, w))
    best = {n: np.inf for n in nodes}

    def walk(n, cost, seen):
        if cost < best[n]:
            best[n] = cost
        for m, w in adj[n]:
            if m not in seen:
                walk(m, cost + w, seen | {m})

    walk(source, 0.0, {source})
    return best


def served_fraction_utility(net, x, counts):
    """Per-agent utility as repository-only cost minus expected fractional cost.

    A request walks its order; the fraction served at the ``k``-th node is the
    new mass ``min(1, cum_k) - min(1, cum_{k-1})`` and the rest is served by
    the repository.
    """
    x = np.asarray(x, dtype=float).reshape(len(net.nodes), net.F)
    dist = {n: path_enumeration_costs(net.nodes, [(a, b, w) for a, b, w in net.edges], n) for n in net.nodes}
    repos = {f: [n for n in net.nodes if net.pinned[net.index[n], f]] for f in range(net.F)}
    out = np.zeros(net.n_agents)
    for p, (c, f) in enumerate(net.pairs):
        r = counts[p]
        if r == 0:
            continue
        d = dist[c]
        rc = min(d[n] for n in repos[f])
        caches = sorted((d[n], n) for n in net.nodes if d[n] < rc)
        served, cost = 0.0, 0.0
        for cost_k, n in caches:
            new = min(1.0, served + x[net.index[n], f]) - served
            cost += new * cost_k
            served += new
        cost += (1.0 - served) * rc
        out[net.pair_agent[p]] += r * (rc - cost)
    return out


def random_network_dict(rng, n_nodes=5, n_agents=2, F=4, max_cap=3):
    """Connected random topology with one full repository and owned caches."""
    nodes = list(range(1, n_nodes + 1))
    edges = []
    for k in range(2, n_nodes + 1):
        edges.append([int(rng.integers(1, k)), k, int(rng.integers(1, 6))])
    for _ in range(n_nodes // 2):
        a, b = rng.choice(nodes, 2, replace=False)
        edges.append([int(a), int(b), int(rng.integers(1, 6))])
    repo = n_nodes
    caches = nodes[:-1]
    owners = np.arange(len(caches)) % n_agents
    rng.shuffle(owners)
    agents = []
    for i in range(n_agents):
        mine = [c for c, o in zip(caches, owners) if o == i]
        agents.append({"caches": mine, "query_nodes": mine[:1]})
    return {
        "name": "random",
        "nodes": nodes,
        "edges": edges,
        "capacities": {c: int(rng.integers(0, max_cap + 1)) for c in caches},
        "repositories": {repo: "all"},
        "agents": agents,
    }


class ScriptedLRU:
    """Plain-list LRU cache used to hand-check the eviction chain."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.items = []

    def access(self, f):
        if f in self.items:
            self.items.remove(f)
        elif len(self.items) >= self.capacity:
            self.items.pop(0)
        self.items.append(f)

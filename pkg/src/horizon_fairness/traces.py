"""Request traces and synthetic utility adversaries.

File ids are 0-based internally; trace files on disk use 1-based ids.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .sequences import QuadraticSequence

# fixed offsets for deriving independent streams from one master seed
STREAM_OFFSETS = {"requests": 11, "shuffle": 23, "example1": 37, "example2": 41, "topology": 53}


def stream_rng(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAM_OFFSETS[purpose], int(index)])


class TraceConfigError(ValueError):
    pass


@dataclass
class AgentTrace:
    """Request process of one agent.

    ``kind`` is ``stationary``, ``nonstationary``, ``shuffled`` (a seeded
    permutation of agent ``source``'s stream) or ``file``.
    """

    kind: str = "stationary"
    sigma: float = 1.2
    source: int | None = None


@dataclass
class TraceConfig:
    kind: str = "stationary"
    sigma: float = 1.2
    batch_size: int = 50
    horizon: int = 10_000
    catalog: int = 20
    shift_period: int = 50
    severity_exponent: float = 0.5
    seed: int = 0
    agents: list[AgentTrace] = field(default_factory=list)
    path: str | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise TraceConfigError("sigma must be >= 0")
        if self.batch_size < 1:
            raise TraceConfigError("batch_size must be >= 1")
        if self.horizon < 1:
            raise TraceConfigError("horizon must be >= 1")
        if self.catalog < 1:
            raise TraceConfigError("catalog must be >= 1")
        kinds = [self.kind] + [a.kind for a in self.agents]
        if "nonstationary" in kinds and self.catalog % 2:
            raise TraceConfigError(f"nonstationary traces need an even catalog, got F={self.catalog}")

    def agent_traces(self, n_agents: int) -> list[AgentTrace]:
        if self.agents:
            if len(self.agents) != n_agents:
                raise TraceConfigError(f"{len(self.agents)} agent traces for {n_agents} agents")
            return self.agents
        return [AgentTrace(self.kind, self.sigma) for _ in range(n_agents)]


def zipf_pmf(sigma: float, F: int) -> np.ndarray:
    """P(rank f) proportional to ``f**-sigma`` for ``f = 1..F`` (index f-1)."""
    w = np.arange(1, F + 1, dtype=float) ** (-float(sigma))
    return w / w.sum()


def zipf_sample(sigma: float, F: int, rng: np.random.Generator, size=None):
    """Draw 0-based file ids from the Zipf law."""
    return rng.choice(F, size=size, p=zipf_pmf(sigma, F))


def _half_rotation(F: int) -> int:
    if F % 2:
        raise TraceConfigError(f"popularity shift needs an even catalog, got F={F}")
    return F // 2


def nonstationary_shift(popularity, F: int | None = None) -> np.ndarray:
    """File ``f`` takes the popularity of file ``(f + F/2) mod F`` (0-based)."""
    popularity = np.asarray(popularity, dtype=float)
    F = popularity.size if F is None else F
    return np.roll(popularity, -_half_rotation(F))


def request_stream(kind: str, sigma: float, n: int, F: int, D: int, rng) -> np.ndarray:
    """``n`` consecutive 0-based file requests of one stationary/nonstationary source."""
    ranks = zipf_sample(sigma, F, rng, size=n)
    if kind == "stationary":
        return ranks
    if kind == "nonstationary":
        half = _half_rotation(F)
        phase = (np.arange(n) // D) % 2
        return np.where(phase == 1, (ranks + half) % F, ranks)
    raise TraceConfigError(f"not a generated trace kind: {kind!r}")


def agent_streams(cfg: TraceConfig, n_agents: int) -> list[np.ndarray]:
    """One ``(T, R)`` array of file requests per agent."""
    T, R, F = cfg.horizon, cfg.batch_size, cfg.catalog
    specs = cfg.agent_traces(n_agents)
    streams: list[np.ndarray | None] = [None] * n_agents
    for i, spec in enumerate(specs):
        if spec.kind in ("stationary", "nonstationary"):
            rng = stream_rng(cfg.seed, "requests", i)
            streams[i] = request_stream(spec.kind, spec.sigma, T * R, F, cfg.shift_period, rng)
        elif spec.kind not in ("shuffled", "file"):
            raise TraceConfigError(f"unknown agent trace kind {spec.kind!r}")
    for i, spec in enumerate(specs):
        if spec.kind == "shuffled":
            src = spec.source
            if src is None or not (0 <= src < n_agents) or streams[src] is None:
                raise TraceConfigError(f"agent {i}: shuffled trace needs a generated source agent")
            streams[i] = stream_rng(cfg.seed, "shuffle", i).permutation(streams[src])
        elif spec.kind == "file":
            raise TraceConfigError("file traces are loaded with read_request_file")
    return [s.reshape(T, R) for s in streams]


def batch_requests(streams: list[np.ndarray], query_nodes: list[list[int]]) -> np.ndarray:
    """Interleave per-agent streams into per-slot request events.

    Returns an int array of shape ``(T, R * I, 2)`` holding ``(node, file)``;
    within a slot, request ``j`` of every agent precedes request ``j + 1``, and
    agent ``i``'s ``j``-th request goes to query node ``j mod |Q_i|``.
    """
    T, R = streams[0].shape
    I = len(streams)
    nodes = np.stack(
        [np.asarray(q)[np.arange(R) % len(q)] for q in query_nodes], axis=1
    )  # (R, I)
    files = np.stack(streams, axis=2)  # (T, R, I)
    ev = np.empty((T, R, I, 2), dtype=np.int64)
    ev[..., 0] = nodes[None]
    ev[..., 1] = files
    return ev.reshape(T, R * I, 2)


def read_request_file(path, horizon: int | None = None) -> list[list[tuple[int, int]]]:
    """Read ``slot,query_node,file`` records (1-based slot and file ids)."""
    slots: dict[int, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"slot", "query_node", "file"} - set(reader.fieldnames or [])
        if missing:
            raise TraceConfigError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            t = int(row["slot"])
            if t < 1:
                raise TraceConfigError(f"{path}: slot ids start at 1")
            slots.setdefault(t, []).append((int(row["query_node"]), int(row["file"]) - 1))
    T = horizon or (max(slots) if slots else 0)
    return [slots.get(t, []) for t in range(1, T + 1)]


def write_request_file(path, events) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "query_node", "file"])
        for t, slot in enumerate(events, start=1):
            for node, f in slot:
                w.writerow([t, int(node), int(f) + 1])


# ---------------------------------------------------------------------------
# synthetic adversaries over a scalar allocation


def severity_schedule(T: int, s: float, rng, n_agents: int = 2) -> np.ndarray:
    """``gamma[:, i]`` is a seeded random permutation of ``{t**-s : t <= T}``."""
    base = np.arange(1, T + 1, dtype=float) ** (-float(s))
    return np.stack([rng.permutation(base) for _ in range(n_agents)], axis=1)


def example1_sequence(T: int, s: float | None, seed: int = 0) -> QuadraticSequence:
    """Fixed utilities ``(1 - x^2, 1 + x)`` plus perturbations ``gamma_t * a_t * x``.

    ``a_t`` is uniform on ``[-1, 1]^2``; ``s=None`` disables the perturbation.
    """
    rng = stream_rng(seed, "example1")
    if s is None:
        c = np.zeros((T, 2))
    else:
        gamma = severity_schedule(T, s, rng)
        a = rng.uniform(-1.0, 1.0, size=(T, 2))
        c = gamma * a
    coef = np.zeros((T, 2, 3))
    coef[:, 0] = [1.0, 0.0, -1.0]
    coef[:, 0, 1] += c[:, 0]
    coef[:, 1] = [1.0, 1.0, 0.0]
    coef[:, 1, 1] += c[:, 1]
    return QuadraticSequence(coef)


# multiset elements as (agent, [c0, c1, c2]) over x in [-1, 1]
EXAMPLE2_ELEMENTS = np.array(
    [
        [[1.0, -1.0, 0.0], [0.0, 2.0, -1.0]],  # (1 - x, 1 - (1 - x)^2)
        [[0.0, 2.0, -1.0], [1.0, -4.0, 0.0]],  # (1 - (1 - x)^2, 1 - 4x)
        [[1.0, 0.0, 0.0], [0.0, -2.0, 0.0]],  # (1, -2x)
    ]
)
EXAMPLE2_MULTISET = np.repeat([0, 1, 2], [10, 20, 10])


def example2_choices(T: int, mode: str, seed: int = 0) -> np.ndarray:
    """Element index per slot; the multiset is replenished every 40 draws."""
    M = EXAMPLE2_MULTISET.size
    n_cycles = -(-T // M)
    if mode == "cyclic":
        seq = np.tile(EXAMPLE2_MULTISET, n_cycles)
    elif mode == "uar":
        rng = stream_rng(seed, "example2")
        seq = np.concatenate([rng.permutation(EXAMPLE2_MULTISET) for _ in range(n_cycles)])
    else:
        raise TraceConfigError(f"example2 mode must be 'cyclic' or 'uar', got {mode!r}")
    return seq[:T]


def example2_sequence(T: int, mode: str = "cyclic", seed: int = 0) -> QuadraticSequence:
    return QuadraticSequence(EXAMPLE2_ELEMENTS[example2_choices(T, mode, seed)])


def alternating_sequence(T: int) -> QuadraticSequence:
    """``(1 + x, 1 - x), (1 + x, 1 + x), ...`` over ``x in [0, x_max]``."""
    coef = np.zeros((T, 2, 3))
    coef[:, 0] = [1.0, 1.0, 0.0]
    coef[:, 1] = [1.0, 1.0, 0.0]
    coef[0::2, 1, 1] = -1.0
    return QuadraticSequence(coef)

"""Scenario assembly, the online loop, and output files."""
from __future__ import annotations

import csv
import json
import logging
import os
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import (
    BenchmarkResult,
    RunMetrics,
    fairness_regret,
    pareto_front,
    price_of_fairness,
    severity_diagnostics,
    solve_hf,
    solve_sf,
    solve_utilitarian,
)
from .cache import CacheSequence, ReplicationPolicy, load_topology, utility_scale
from .config import ExperimentConfig
from .domains import BoxDomain, ProductDomain
from .fairness import floored_value
from .policy import OHFPolicy, OSFPolicy
from .sequences import TransformedSequence
from .traces import (
    agent_streams,
    alternating_sequence,
    batch_requests,
    example1_sequence,
    example2_sequence,
    read_request_file,
)

logger = logging.getLogger(__name__)

TIMESERIES_COLUMNS = ("slot", "agent_id", "cum_utility", "avg_utility", "objective_value", "regret_estimate")


class InvariantViolation(RuntimeError):
    def __init__(self, slot: int, what: str, dump: dict):
        super().__init__(f"slot {slot}: {what}")
        self.slot = slot
        self.what = what
        self.dump = dump


@dataclass
class Scenario:
    seq: object
    domain: object
    params: object
    events: object = None  # per-slot (node, file) requests for cache scenarios
    net: object = None
    base_seq: object = None  # untransformed cache sequence (telescoping checks)


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: RunMetrics
    benchmarks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    pareto: np.ndarray | None = None
    iterates: np.ndarray | None = None


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    tr = cfg.trace
    T = tr.horizon
    if tr.kind == "example1":
        seq, dom = example1_sequence(T, tr.severity_exponent, cfg.seed), BoxDomain(0.0, 1.0)
    elif tr.kind.startswith("example2"):
        seq, dom = example2_sequence(T, tr.kind.split("-")[1], cfg.seed), BoxDomain(-1.0, 1.0)
    elif tr.kind == "alternating":
        seq, dom = alternating_sequence(T), BoxDomain(0.0, cfg.x_max)
    else:
        seq = dom = None
    if seq is not None:
        params = cfg.fairness.with_agents(seq.n_agents)
        return Scenario(_transform(cfg, seq), dom, params)

    net = load_topology(cfg.topology, tr.catalog)
    if tr.kind == "custom":
        events = read_request_file(tr.path, T)
    else:
        streams = agent_streams(tr, net.n_agents)
        events = batch_requests(streams, [list(a.query_nodes) for a in net.agents])
    counts = net.counts_from_events(events, T)
    base = CacheSequence(net, counts, utility_scale(net, tr.batch_size))
    params = cfg.fairness.with_agents(net.n_agents)
    return Scenario(_transform(cfg, base), net.domain(), params, events, net, base)


def _transform(cfg, seq):
    if cfg.transform is None:
        return seq
    return TransformedSequence(seq, cfg.transform.kind, cfg.transform.vector, cfg.fairness.alpha)


def initial_allocation(cfg: ExperimentConfig, domain):
    if cfg.policy_options.x1 == "origin":
        return None
    if isinstance(domain, ProductDomain):
        # spread each cache's free capacity evenly over its free files
        parts = []
        for f in domain.factors:
            free = ~f.pinned_lower
            share = min(1.0, f.free_capacity / max(1, free.sum()))
            parts.append(np.where(free, share, 1.0))
        return domain.project(np.concatenate(parts))
    return 0.5 * (domain.lower + domain.upper)


def make_policy(cfg: ExperimentConfig, sc: Scenario):
    if cfg.policy in ("lru", "lfu"):
        return ReplicationPolicy(sc.net, cfg.policy)
    x1 = initial_allocation(cfg, sc.domain)
    if cfg.policy == "osf":
        return OSFPolicy(sc.params, sc.domain, x1=x1, eps=cfg.policy_options.osf_eps)
    rate = cfg.policy_options.dual_rate
    if rate == "exact" and sc.params.alpha > 0:
        rate = 1.0 / sc.params.strong_convexity
    elif rate in ("default", "exact"):
        rate = None
    return OHFPolicy(sc.params, sc.domain, x1=x1, dual_rate=rate)


def _check_slot(t, x, policy, sc, fb, prev_eta, tol=1e-9):
    """Raise :class:`InvariantViolation` when a per-slot invariant fails."""
    dump = {"slot": t, "x": x.tolist(), "utilities": fb.values.tolist()}
    if not sc.domain.contains(x, tol=tol):
        raise InvariantViolation(t, "allocation left the feasible set", dump)
    theta = getattr(policy, "theta", None)
    if isinstance(policy, OHFPolicy) and not policy.dual_frozen:
        dump["theta"] = theta.tolist()
        if np.any(theta < policy.theta_lower - tol) or np.any(theta > policy.theta_upper + tol):
            raise InvariantViolation(t, "dual variable left its box", dump)
    eta = policy.last.eta_x
    if np.isfinite(prev_eta) and eta > prev_eta * (1 + 1e-12):
        dump["eta"] = [prev_eta, eta]
        raise InvariantViolation(t, "primal learning rate increased", dump)
    if sc.base_seq is not None:
        u = sc.base_seq.feedback(t - 1, x).values
        c = sc.base_seq.cost(t - 1, x)
        c0 = sc.base_seq.cost(t - 1, sc.net.x0())
        if not np.allclose(u + c, c0, rtol=0, atol=1e-9 * max(1.0, float(np.max(c0)))):
            dump["cost"] = c.tolist()
            dump["cost_x0"] = c0.tolist()
            raise InvariantViolation(t, "utility + cost != repository-only cost", dump)
    return eta


def run_online(cfg: ExperimentConfig, sc: Scenario, check=True, record_iterates=False):
    policy = make_policy(cfg, sc)
    T = len(sc.seq)
    U = np.zeros((T, sc.seq.n_agents))
    X = np.zeros((T, sc.domain.dim)) if record_iterates else None
    prev_eta = np.inf
    for t in range(T):
        x = policy.next()
        fb = sc.seq.feedback(t, x)
        U[t] = fb.values
        if record_iterates:
            X[t] = x
        if isinstance(policy, ReplicationPolicy):
            policy.update(fb, sc.events[t])
        else:
            policy.update(fb)
        if check:
            prev_eta = _check_slot(t + 1, x, policy, sc, fb, prev_eta)
    clamps = int(getattr(policy, "clamp_count", 0))
    return RunMetrics(U, clamps), X


def solve_benchmarks(cfg: ExperimentConfig, sc: Scenario, which=None) -> dict:
    which = cfg.benchmarks if which is None else which
    out: dict[str, BenchmarkResult] = {}
    if "hf" in which or "pareto" in which:
        out["hf"] = solve_hf(sc.seq, sc.domain, sc.params)
    if "sf" in which:
        out["sf"] = solve_sf(sc.seq, sc.domain, sc.params)
    if "util" in which:
        out["util"] = solve_utilitarian(sc.seq, sc.domain)
    return out


def git_stamp() -> str:
    try:
        return subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, check=True, cwd=Path(__file__).parent, timeout=5,
        ).stdout.strip()
    except Exception:
        return "unknown"


def _f(v):
    return None if v is None or not np.isfinite(v) else float(v)


def summarize(cfg, sc, metrics, bench, severity) -> dict:
    avg = metrics.avg_utilities
    obj, floored = floored_value(sc.params.alpha, avg)
    s = {
        "scenario": cfg.scenario,
        "policy": cfg.policy,
        "alpha": sc.params.alpha,
        "horizon": len(sc.seq),
        "n_agents": sc.seq.n_agents,
        "avg_utilities": avg.tolist(),
        "objective": obj,
        "objective_floored": floored > 0,
        "clamp_count": metrics.clamp_count,
        "invariant_violations": len(metrics.violations),
        "version": __version__,
        "git": git_stamp(),
        "config": cfg.echo(),
    }
    if "hf" in bench:
        reg, fl = fairness_regret(avg, bench["hf"], sc.params)
        s["regret"] = reg
        s["regret_floored"] = fl
    for name, b in bench.items():
        s[f"benchmark_{name}"] = {
            "objective": b.objective,
            "avg_utilities": b.avg_utilities.tolist(),
            "x_star": b.x_star.tolist(),
            "method": b.method,
            "floored": b.floored,
        }
    if "util" in bench:
        s["pof"] = _f(price_of_fairness(avg, bench["util"]))
        for name in ("hf", "sf"):
            if name in bench:
                s[f"pof_{name}"] = _f(price_of_fairness(bench[name].avg_utilities, bench["util"]))
    if severity is not None:
        s["severity"] = {
            "V_T": severity.V,
            "W_T_upper": severity.W,
            "blocks": {str(k): v for k, v in severity.per_block.items()},
        }
    return s


def emit_outputs(result: RunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    U = result.metrics.utilities
    T, I = U.shape
    cum = np.cumsum(U, axis=0)
    avg = cum / np.arange(1, T + 1)[:, None]
    alpha = result.summary["alpha"]
    hf = result.benchmarks.get("hf")
    with open(out / "timeseries.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_COLUMNS)
        for t in range(T):
            obj = floored_value(alpha, avg[t])[0]
            reg = "" if hf is None else repr(float(hf.objective - obj))
            for i in range(I):
                w.writerow([t + 1, i + 1, repr(float(cum[t, i])), repr(float(avg[t, i])), repr(float(obj)), reg])
    with open(out / "summary.json", "w") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if result.pareto is not None:
        with open(out / "pareto.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("w1", "u1", "u2"))
            for row in result.pareto:
                w.writerow([repr(float(v)) for v in row])


def _check_writable(out_dir) -> None:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from None
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")


def run_experiment(cfg: ExperimentConfig, out_dir=None, check=True, record_iterates=False) -> RunResult:
    """Run one configured experiment; writes files when ``out_dir`` (or ``cfg.output``) is set."""
    out_dir = out_dir or cfg.output
    if out_dir is not None:
        _check_writable(out_dir)
    sc = build_scenario(cfg)
    try:
        metrics, X = run_online(cfg, sc, check=check, record_iterates=record_iterates)
    except InvariantViolation as e:
        if out_dir is not None:
            with open(Path(out_dir) / "violation.json", "w") as fh:
                json.dump({"slot": e.slot, "what": e.what, **e.dump}, fh, indent=2)
        raise
    bench = solve_benchmarks(cfg, sc)
    severity = None
    if "hf" in bench:
        severity = severity_diagnostics(sc.seq, bench["hf"].x_star, cfg.severity_blocks)
    pareto = None
    if "pareto" in cfg.benchmarks:
        if sc.seq.n_agents == 2:
            pareto = pareto_front(sc.seq, sc.domain)
        else:
            logger.warning("pareto front skipped: %d agents", sc.seq.n_agents)
    summary = summarize(cfg, sc, metrics, bench, severity)
    result = RunResult(cfg, metrics, bench, summary, pareto, X)
    if out_dir is not None:
        emit_outputs(result, out_dir)
    return result

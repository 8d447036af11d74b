"""Experiment configuration files (YAML).

Schema errors name the offending key path and its line in the file. Unknown
keys are rejected.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .fairness import FairnessParams
from .traces import AgentTrace, TraceConfig, TraceConfigError

SYNTHETIC_KINDS = ("example1", "example2-cyclic", "example2-uar", "alternating")
CACHE_KINDS = ("stationary", "nonstationary", "custom")
POLICIES = ("ohf", "osf", "lru", "lfu")
BENCHMARKS = ("hf", "sf", "util", "pareto")


class ConfigError(ValueError):
    pass


@dataclass
class PolicyOptions:
    x1: str = "origin"  # origin | uniform
    dual_rate: float | str | None = None  # number, "default" or "exact"
    osf_eps: float = 1e-9


@dataclass
class TransformConfig:
    kind: str  # nbs | weighted
    vector: list
    allow_any_alpha: bool = False


@dataclass
class ExperimentConfig:
    scenario: str
    policy: str
    trace: TraceConfig
    fairness: FairnessParams
    topology: str | None = None
    seed: int = 0
    output: str | None = None
    benchmarks: tuple = ("hf", "util")
    policy_options: PolicyOptions = field(default_factory=PolicyOptions)
    transform: TransformConfig | None = None
    x_max: float = 3.0
    severity_blocks: tuple = ()
    source: str | None = None

    @property
    def horizon(self) -> int:
        return self.trace.horizon

    @property
    def synthetic(self) -> bool:
        return self.trace.kind in SYNTHETIC_KINDS

    def echo(self) -> dict:
        d = asdict(self)
        d["benchmarks"] = list(self.benchmarks)
        d["severity_blocks"] = list(self.severity_blocks)
        return d


_TOP = {
    "scenario", "policy", "topology", "fairness", "trace", "horizon", "seed", "output",
    "benchmarks", "policy_options", "transform", "x_max", "severity_blocks",
}
_FAIRNESS = {"alpha", "u_star_min", "u_star_max"}
_TRACE = {"kind", "sigma", "batch_size", "catalog", "shift_period", "severity_exponent", "agents", "path"}
_AGENT = {"kind", "sigma", "source"}
_POLICY_OPTS = {"x1", "dual_rate", "osf_eps"}
_TRANSFORM = {"kind", "vector", "allow_any_alpha"}


def _line_index(node, path=(), out=None) -> dict:
    """Map key paths to 1-based line numbers from a composed YAML node."""
    out = {} if out is None else out
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[p] = k.start_mark.line + 1
            _line_index(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (str(i),), out)
    return out


class _Reader:
    def __init__(self, source: str, lines: dict):
        self.source = source
        self.lines = lines

    def fail(self, path, msg):
        line = None
        p = tuple(str(s) for s in path)
        while p and line is None:
            line = self.lines.get(p)
            p = p[:-1]
        where = f"{self.source}:{line}" if line else self.source
        key = ".".join(str(s) for s in path) or "<root>"
        raise ConfigError(f"{where}: {key}: {msg}")

    def mapping(self, d, path, allowed):
        if d is None:
            return {}
        if not isinstance(d, dict):
            self.fail(path, "expected a mapping")
        for k in d:
            if k not in allowed:
                self.fail(path + (k,), f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return d

    def number(self, d, key, path, default, integer=False, minimum=None):
        v = d.get(key, default)
        if v is None:
            return None
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok:
            self.fail(path + (key,), f"expected {'an integer' if integer else 'a number'}, got {v!r}")
        if minimum is not None and v < minimum:
            self.fail(path + (key,), f"must be >= {minimum}, got {v}")
        return v

    def choice(self, d, key, path, options, default=None):
        v = d.get(key, default)
        if v not in options:
            self.fail(path + (key,), f"expected one of {list(options)}, got {v!r}")
        return v


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    text = path.read_text()
    return parse_config_text(text, str(path), base_dir=path.parent)


def parse_config_text(text: str, source: str = "<config>", base_dir: Path | None = None) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{source}: invalid YAML: {e}") from None
    r = _Reader(source, _line_index(node) if node is not None else {})
    data = r.mapping(data, (), _TOP)
    for key in ("scenario", "policy"):
        if key not in data:
            r.fail((key,), "required key missing")
    scenario = data["scenario"]
    if not isinstance(scenario, str) or not scenario:
        r.fail(("scenario",), "expected a nonempty string")
    policy = r.choice(data, "policy", (), POLICIES)

    fd = r.mapping(data.get("fairness"), ("fairness",), _FAIRNESS)
    alpha = r.number(fd, "alpha", ("fairness",), 1.0, minimum=0)
    try:
        fairness = FairnessParams(
            float(alpha),
            float(r.number(fd, "u_star_min", ("fairness",), 0.1)),
            float(r.number(fd, "u_star_max", ("fairness",), 1.0)),
        )
    except ValueError as e:
        r.fail(("fairness",), str(e))

    td = r.mapping(data.get("trace"), ("trace",), _TRACE)
    kind = r.choice(td, "kind", ("trace",), SYNTHETIC_KINDS + CACHE_KINDS, "stationary")
    horizon = r.number(data, "horizon", (), 10_000, integer=True)
    if horizon < 1:
        r.fail(("horizon",), f"horizon must be a positive number of slots, got {horizon}")
    agents = []
    ad = td.get("agents") or []
    if not isinstance(ad, list):
        r.fail(("trace", "agents"), "expected a list")
    for i, a in enumerate(ad):
        p = ("trace", "agents", i)
        a = r.mapping(a, p, _AGENT)
        ak = r.choice(a, "kind", p, ("stationary", "nonstationary", "shuffled"), "stationary")
        src = r.number(a, "source", p, None, integer=True, minimum=0)
        if ak == "shuffled" and src is None:
            r.fail(p, "shuffled traces need a source agent")
        agents.append(AgentTrace(ak, float(r.number(a, "sigma", p, td.get("sigma", 1.2), minimum=0)), src))
    trace_path = td.get("path")
    if kind == "custom":
        if not trace_path:
            r.fail(("trace", "path"), "custom traces need a request file path")
        if base_dir is not None and not Path(trace_path).is_absolute():
            trace_path = str((base_dir / trace_path).resolve())
    try:
        trace = TraceConfig(
            kind=kind,
            sigma=float(r.number(td, "sigma", ("trace",), 1.2, minimum=0)),
            batch_size=r.number(td, "batch_size", ("trace",), 50, integer=True, minimum=1),
            horizon=horizon,
            catalog=r.number(td, "catalog", ("trace",), 20, integer=True, minimum=1),
            shift_period=r.number(td, "shift_period", ("trace",), 50, integer=True, minimum=1),
            severity_exponent=float(r.number(td, "severity_exponent", ("trace",), 0.5, minimum=0)),
            seed=0,
            agents=agents,
            path=trace_path,
        )
    except TraceConfigError as e:
        bad = ("trace", "catalog") if "catalog" in str(e) else ("trace",)
        r.fail(bad, str(e))

    topology = data.get("topology")
    if kind in CACHE_KINDS:
        if not topology:
            r.fail(("topology",), f"trace kind {kind!r} needs a topology preset or file")
        from .cache import TOPOLOGY_DIR, list_presets

        tp = Path(topology)
        if base_dir is not None and not tp.is_absolute() and (base_dir / tp).exists():
            topology = str((base_dir / tp).resolve())
        elif not tp.exists() and not (TOPOLOGY_DIR / f"{topology}.yaml").exists():
            r.fail(("topology",), f"unknown topology {topology!r}; presets: {list_presets()}")
    elif topology is not None:
        r.fail(("topology",), f"trace kind {kind!r} does not use a topology")
    if policy in ("lru", "lfu") and kind not in CACHE_KINDS:
        r.fail(("policy",), f"{policy} needs a cache-network trace")

    seed = r.number(data, "seed", (), 0, integer=True, minimum=0)
    trace.seed = seed

    bm = data.get("benchmarks", ["hf", "util"])
    if not isinstance(bm, list) or any(b not in BENCHMARKS for b in bm):
        r.fail(("benchmarks",), f"expected a list drawn from {list(BENCHMARKS)}")

    po = r.mapping(data.get("policy_options"), ("policy_options",), _POLICY_OPTS)
    x1 = r.choice(po, "x1", ("policy_options",), ("origin", "uniform"), "origin")
    dual = po.get("dual_rate")
    if dual is not None and dual not in ("default", "exact"):
        dual = r.number(po, "dual_rate", ("policy_options",), None)
        if dual <= 0:
            r.fail(("policy_options", "dual_rate"), "must be positive")
    options = PolicyOptions(x1, dual, float(r.number(po, "osf_eps", ("policy_options",), 1e-9, minimum=0)))

    transform = None
    if data.get("transform") is not None:
        tr = r.mapping(data["transform"], ("transform",), _TRANSFORM)
        tk = r.choice(tr, "kind", ("transform",), ("nbs", "weighted"))
        vec = tr.get("vector")
        if not isinstance(vec, list) or not all(isinstance(v, (int, float)) for v in vec):
            r.fail(("transform", "vector"), "expected a list of numbers")
        allow = bool(tr.get("allow_any_alpha", False))
        if tk == "nbs" and fairness.alpha != 1 and not allow:
            r.fail(("transform",), "disagreement points need alpha = 1 (set allow_any_alpha to override)")
        transform = TransformConfig(tk, [float(v) for v in vec], allow)

    x_max = r.number(data, "x_max", (), 3.0, minimum=0)
    blocks = data.get("severity_blocks", [])
    if not isinstance(blocks, list) or not all(isinstance(b, int) and b >= 1 for b in blocks):
        r.fail(("severity_blocks",), "expected a list of positive integers")
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        r.fail(("output",), "expected a path string")

    return ExperimentConfig(
        scenario=scenario,
        policy=policy,
        trace=trace,
        fairness=fairness,
        topology=topology,
        seed=seed,
        output=output,
        benchmarks=tuple(bm),
        policy_options=options,
        transform=transform,
        x_max=float(x_max),
        severity_blocks=tuple(blocks),
        source=source,
    )

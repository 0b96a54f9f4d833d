"""MAPE-K orchestration: one decision epoch, multi-node replay, accounting.

Each epoch runs Monitor -> Analyse -> context/reasoner/constraint agents ->
deterministic selection and ordering -> planner -> gate -> auditor ->
execute-or-fail-safe, and always ends in a :class:`DecisionTrace`.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from itertools import combinations
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .agents import (
    AGENTS, AgentBackend, AgentError, AgentMessage, AuditVerdict, MitigationPlan,
    filter_feasible, make_backend, run_auditor, run_context_agent, run_planner, run_reasoner,
    wall_clock,
)
from .catalog import Catalog, conflict_count, load_catalog
from .context import ContextError, EncoderConfig, StructuredContext, TelemetryVector, encode_context
from .flows import NODE_COLUMNS, DatasetError
from .gate import GateVerdict, failsafe_portfolio, validate_plan
from .optimizer import (
    Portfolio, ScoringWeights, activation_order, count_subsets, portfolio_score, select_portfolio,
    within_budget,
)

log = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1
THERMAL_THRESHOLD_C = 40.0

# Per-agent (mean, P90) latency targets in seconds, 500-run column of the
# reference per-agent runtime table.
DEFAULT_AGENT_LATENCY = {
    "context": (4.233, 5.754),
    "reasoner": (5.835, 7.615),
    "constraint": (4.293, 5.607),
    "planner": (4.815, 6.303),
    "auditor": (3.153, 4.224),
}


@dataclass(frozen=True)
class PowerParams:
    p0: float = 2.0
    gamma1: float = 0.5
    gamma2: float = 0.05
    threshold: float = THERMAL_THRESHOLD_C


def avg_power(load: float, temp: float, params: PowerParams = PowerParams()) -> float:
    return params.p0 + params.gamma1 * load + params.gamma2 * max(0.0, temp - params.threshold)


def energy(power: float, dt: float) -> float:
    return power * dt


def lognormal_params(mean: float, p90: float) -> tuple[float, float]:
    """(mu, sigma) of a log-normal with the given mean and 90th percentile."""
    z = float(ndtri(0.9))
    disc = z * z - 2.0 * math.log(p90 / mean)
    if disc < 0 or p90 <= 0 or mean <= 0:
        raise ValueError(f"no log-normal with mean={mean} and p90={p90}")
    sigma = z - math.sqrt(disc)
    return math.log(mean) - 0.5 * sigma * sigma, sigma


@dataclass(frozen=True)
class LatencyConfig:
    mode: str = "simulated"  # or "wallclock"
    agents: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_AGENT_LATENCY))
    net_mean: float = 0.25
    net_sigma: float = 0.35
    det_base: float = 2e-3
    det_per_subset: float = 1e-4

    def __post_init__(self):
        if self.mode not in ("simulated", "wallclock"):
            raise ValueError(f"latency mode must be simulated or wallclock, got {self.mode!r}")
        object.__setattr__(self, "agents", {k: tuple(v) for k, v in self.agents.items()})


class SimulatedClock:
    """Clock that charges each agent call a seeded log-normal latency."""

    def __init__(self, cfg: LatencyConfig, rng: np.random.Generator):
        self.rng = rng
        self.params = {a: lognormal_params(*cfg.agents[a]) for a in AGENTS}

    def __call__(self, agent, call):
        out = call()
        mu, sigma = self.params[agent]
        return out, float(self.rng.lognormal(mu, sigma))


@dataclass(frozen=True)
class NodeConfig:
    node_id: str
    capabilities: frozenset[str]
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=lambda: {
        "cpu_headroom": (0.15, 0.95),
        "mem_headroom": (0.15, 0.95),
        "latency_budget": (60.0, 220.0),
        "energy_budget": (30.0, 140.0),
        "device_temp": (35.0, 47.0),
        "load_proxy": (0.25, 0.75),
    })
    step: float = 0.15  # random-walk step as a fraction of each range


class NodeSimulator:
    """Seeded bounded random walk over a node's resource and thermal state."""

    def __init__(self, node: NodeConfig, rng: np.random.Generator):
        self.node = node
        self.rng = rng
        self.state = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in node.bounds.items()}

    def step(self) -> dict[str, float]:
        for k, (lo, hi) in self.node.bounds.items():
            v = self.state[k] + self.rng.normal(0.0, self.node.step * (hi - lo))
            # reflect at the bounds
            if v < lo:
                v = lo + (lo - v)
            if v > hi:
                v = hi - (v - hi)
            self.state[k] = float(min(max(v, lo), hi))
        return dict(self.state)


@dataclass
class EngineConfig:
    catalog: str | None = None
    weights: ScoringWeights = field(default_factory=ScoringWeights)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    power: PowerParams = field(default_factory=PowerParams)
    latency: LatencyConfig = field(default_factory=LatencyConfig)
    backend: str = "mock"
    remote: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0
    window_s: float = 10.0
    nodes: Sequence[Mapping[str, Any]] = ()

    @classmethod
    def from_dict(cls, d: Mapping) -> "EngineConfig":
        known = {"catalog", "weights", "encoder", "power", "latency", "backend", "remote",
                 "seed", "window_s", "nodes"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown engine config keys: {sorted(unknown)}")
        kw = dict(d)
        if "weights" in kw:
            kw["weights"] = ScoringWeights.from_dict(kw["weights"])
        if "encoder" in kw:
            kw["encoder"] = EncoderConfig.from_dict(kw["encoder"])
        if "power" in kw:
            kw["power"] = PowerParams(**kw["power"])
        if "latency" in kw:
            kw["latency"] = LatencyConfig(**kw["latency"])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "EngineConfig":
        path = Path(path)
        cfg = cls.from_dict(json.loads(path.read_text()))
        if cfg.catalog and not Path(cfg.catalog).is_absolute():
            cfg.catalog = str(path.parent / cfg.catalog)
        return cfg

    def load_catalog(self) -> Catalog:
        return load_catalog(Path(self.catalog) if self.catalog else None)

    def node_configs(self, n: int) -> list[NodeConfig]:
        """Explicit ``nodes`` entries first, then generated defaults.

        Default node ``node-XX`` gets the encoder's capability set, plus
        ``stateful_firewall`` when XX is even.
        """
        out = []
        for i in range(n):
            if i < len(self.nodes):
                spec = self.nodes[i]
                caps = frozenset(spec.get("capabilities", self.encoder.capabilities))
                out.append(NodeConfig(spec.get("id", f"node-{i + 1:02d}"), caps))
            else:
                caps = set(self.encoder.capabilities)
                if (i + 1) % 2 == 0:
                    caps.add("stateful_firewall")
                out.append(NodeConfig(f"node-{i + 1:02d}", frozenset(caps)))
        return out


@dataclass
class DecisionTrace:
    epoch: int
    node: str
    telemetry_digest: str
    threat_label: str
    context: StructuredContext | None = None
    messages: list[AgentMessage] = field(default_factory=list)
    candidates: tuple[str, ...] = ()
    feasible: tuple[str, ...] = ()
    y_det: Portfolio = field(default_factory=Portfolio)
    order_det: tuple[str, ...] = ()
    plan: MitigationPlan | None = None
    gate: GateVerdict | None = None
    audit: AuditVerdict | None = None
    executed: bool = False
    failsafe: bool = False
    executed_portfolio: tuple[str, ...] = ()
    executed_order: tuple[str, ...] = ()
    failure: dict | None = None
    agent_latency: dict[str, float] = field(default_factory=dict)
    t_net: float = 0.0
    t_det: float = 0.0
    latency: float = 0.0
    power: float = 0.0
    energy: float = 0.0
    load: float = 0.0
    temp: float = 0.0

    @property
    def approved(self) -> bool:
        return bool(self.gate and self.gate.ok and self.audit and self.audit.approved)

    def to_dict(self) -> dict:
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "epoch": self.epoch,
            "node": self.node,
            "telemetry_digest": self.telemetry_digest,
            "threat_label": self.threat_label,
            "context": self.context.to_dict() if self.context else None,
            "messages": [m.to_dict() for m in self.messages],
            "candidates": list(self.candidates),
            "feasible": list(self.feasible),
            "y_det": self.y_det.to_dict(),
            "order_det": list(self.order_det),
            "plan": self.plan.to_dict() if self.plan else None,
            "gate": self.gate.to_dict() if self.gate else None,
            "audit": self.audit.to_dict() if self.audit else None,
            "approved": self.approved,
            "executed": self.executed,
            "failsafe": self.failsafe,
            "executed_portfolio": list(self.executed_portfolio),
            "executed_order": list(self.executed_order),
            "failure": self.failure,
            "latency": {
                "agents": dict(self.agent_latency),
                "t_net": self.t_net,
                "t_det": self.t_det,
                "total": self.latency,
            },
            "power": self.power,
            "energy": self.energy,
            "node_state": {"load": self.load, "temp": self.temp},
        }


def telemetry_digest(x: TelemetryVector) -> str:
    blob = json.dumps(x.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def epoch_nonce(seed: int, node_index: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, node_index, epoch]).generate_state(1)[0])


def run_epoch(x: TelemetryVector, catalog: Catalog, weights: ScoringWeights,
              backend: AgentBackend, *, node: NodeConfig | None = None, epoch: int = 0,
              seed: int = 0, node_index: int = 0, config: EngineConfig | None = None
              ) -> DecisionTrace:
    """One MAPE-K decision epoch; agent failures end in the fail-safe, never raise."""
    cfg = config or EngineConfig(weights=weights)
    encoder = cfg.encoder
    if node is not None:
        encoder = EncoderConfig(**{**asdict(encoder), "capabilities": node.capabilities})
    nonce = epoch_nonce(seed, node_index, epoch)
    simulated = cfg.latency.mode == "simulated"
    rng = np.random.default_rng([seed, 2, node_index, epoch])
    clock = SimulatedClock(cfg.latency, rng) if simulated else wall_clock

    trace = DecisionTrace(
        epoch=epoch,
        node=node.node_id if node else "node-01",
        telemetry_digest=telemetry_digest(x),
        threat_label=x.threat_label,
        load=x.load_proxy,
        temp=x.device_temp,
    )
    t_det = 0.0
    try:
        # Monitor / Analyse
        t0 = time.perf_counter()
        s = encode_context(x, catalog, encoder)
        t_det += time.perf_counter() - t0
        trace.context = s
        kw = {"epoch": epoch, "nonce": nonce, "clock": clock}

        msg, s_star = run_context_agent(s, catalog, backend, **kw)
        trace.messages.append(msg)
        msg, cands = run_reasoner(s_star, catalog, weights, backend, **kw)
        trace.messages.append(msg)
        trace.candidates = cands.candidates
        # deterministic filter uses the trusted encoder output, not the agent's copy
        msg, feasible = filter_feasible(cands, s_star, catalog, backend,
                                        trusted_capabilities=s.capabilities, **kw)
        trace.messages.append(msg)
        trace.feasible = feasible

        t0 = time.perf_counter()
        y_det = select_portfolio(feasible, s, s.budgets, catalog, weights)
        order = activation_order(y_det.members, catalog)
        t_det += time.perf_counter() - t0
        trace.y_det, trace.order_det = y_det, tuple(order)

        msg, plan = run_planner(s_star, y_det, order, catalog, backend, feasible=feasible, **kw)
        trace.messages.append(msg)
        trace.plan = plan

        t0 = time.perf_counter()
        verdict = validate_plan(plan, y_det, order, s.budgets, catalog)
        t_det += time.perf_counter() - t0
        trace.gate = verdict

        msg, audit = run_auditor(s_star, plan, verdict.messages(), backend, **kw)
        trace.messages.append(msg)
        trace.audit = audit
    except AgentError as exc:
        elapsed = getattr(exc, "elapsed", 0.0)
        trace.failure = {"stage": exc.agent, "category": exc.category, "message": str(exc)}
        trace.agent_latency[exc.agent] = elapsed
        log.warning("epoch %d on %s: agent stage failed: %s", epoch, trace.node, exc)
    except ContextError as exc:
        trace.failure = {"stage": "analyse", "category": "context_error", "message": str(exc)}
        log.warning("epoch %d on %s: telemetry rejected: %s", epoch, trace.node, exc)

    for m in trace.messages:
        trace.agent_latency[m.agent] = m.latency

    if trace.approved and trace.plan and trace.plan.selected_patterns:
        trace.executed = True
        trace.executed_portfolio = tuple(sorted(trace.plan.selected_patterns))
        trace.executed_order = tuple(trace.plan.activation_order)
    else:
        budgets = trace.context.budgets if trace.context else None
        if budgets is not None:
            fs, fs_order = failsafe_portfolio(catalog, budgets)
            trace.executed_portfolio, trace.executed_order = fs.members, tuple(fs_order)
        trace.failsafe = True

    if simulated:
        n_sub = count_subsets(len(trace.feasible), weights.portfolio_bound)
        trace.t_det = cfg.latency.det_base + cfg.latency.det_per_subset * n_sub
        trace.t_net = float(rng.lognormal(math.log(cfg.latency.net_mean) - 0.5 * cfg.latency.net_sigma ** 2,
                                          cfg.latency.net_sigma))
    else:
        trace.t_det = t_det
        trace.t_net = 0.0
    trace.latency = sum(trace.agent_latency[a] for a in AGENTS if a in trace.agent_latency) \
        + trace.t_net + trace.t_det
    trace.power = avg_power(x.load_proxy, x.device_temp, cfg.power)
    trace.energy = energy(trace.power, trace.latency)
    return trace


def balanced_sample(rows: Sequence[Mapping], n_per_class: int, classes: Iterable[str],
                    seed: int = 0) -> list[Mapping]:
    """Exactly ``n_per_class`` rows of each class, shuffled by ``seed``."""
    classes = sorted(set(classes))
    if n_per_class < 0:
        raise ValueError("n_per_class must be >= 0")
    rng = np.random.default_rng([seed, 0xBA1])
    picked: list[Mapping] = []
    for c in classes:
        pool = [r for r in rows if r["threat_label"] == c]
        if len(pool) < n_per_class:
            raise DatasetError(f"class {c!r} has {len(pool)} windows, need {n_per_class}")
        idx = rng.choice(len(pool), size=n_per_class, replace=False)
        picked.extend(pool[i] for i in sorted(idx))
    order = rng.permutation(len(picked))
    return [picked[i] for i in order]


def _window_telemetry(row: Mapping, state: Mapping[str, float]) -> TelemetryVector:
    merged = dict(state)
    merged.update({k: v for k, v in row.items() if k not in NODE_COLUMNS or v is not None})
    return TelemetryVector.from_mapping(merged)


def run_node(windows: Sequence[Mapping], node: NodeConfig, node_index: int, catalog: Catalog,
             weights: ScoringWeights, backend: AgentBackend, seed: int,
             config: EngineConfig) -> list[DecisionTrace]:
    sim = NodeSimulator(node, np.random.default_rng([seed, 1, node_index]))
    traces = []
    for epoch, row in enumerate(windows):
        x = _window_telemetry(row, sim.step())
        traces.append(run_epoch(x, catalog, weights, backend, node=node, epoch=epoch,
                                seed=seed, node_index=node_index, config=config))
    return traces


def run_replay(rows: Sequence[Mapping], n_nodes: int, epochs_per_node: int, catalog: Catalog,
               weights: ScoringWeights, backend: AgentBackend, seed: int = 0,
               config: EngineConfig | None = None, classes: Iterable[str] | None = None,
               node_order: Sequence[int] | None = None) -> list[DecisionTrace]:
    """Balanced, disjoint replay of labelled windows across ``n_nodes`` nodes.

    ``node_order`` only changes the execution order; the returned log is
    always sorted by node then epoch.
    """
    if n_nodes < 1 or epochs_per_node < 1:
        raise ValueError("n_nodes and epochs_per_node must be >= 1")
    cfg = config or EngineConfig(weights=weights, seed=seed)
    total = n_nodes * epochs_per_node
    classes = sorted(set(classes) if classes else {r["threat_label"] for r in rows} - {"benign"})
    if not classes:
        raise DatasetError("dataset has no labelled attack windows")
    if len(rows) < total:
        raise DatasetError(f"dataset has {len(rows)} windows, need {total}")
    per_class = -(-total // len(classes))
    windows = balanced_sample(rows, per_class, classes, seed)[:total]
    nodes = cfg.node_configs(n_nodes)

    by_node: dict[int, list[DecisionTrace]] = {}
    for k in (node_order if node_order is not None else range(n_nodes)):
        chunk = windows[k * epochs_per_node:(k + 1) * epochs_per_node]
        by_node[k] = run_node(chunk, nodes[k], k, catalog, weights, backend, seed, cfg)
    return [t for k in sorted(by_node) for t in by_node[k]]


def dump_trace(trace: DecisionTrace | Mapping) -> str:
    d = trace.to_dict() if isinstance(trace, DecisionTrace) else trace
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def write_traces(path: str | Path, traces: Iterable[DecisionTrace | Mapping]) -> None:
    with Path(path).open("w") as fh:
        for t in traces:
            fh.write(dump_trace(t) + "\n")


def read_traces(path: str | Path) -> list[dict]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def build_backend(config: EngineConfig, catalog: Catalog, selector: str | None = None) -> AgentBackend:
    return make_backend(selector or config.backend, catalog, config.weights, config.seed, config.remote)


def render_trace(trace: DecisionTrace | Mapping, catalog: Catalog,
                 weights: ScoringWeights | None = None) -> str:
    """Human-readable epoch log, sectioned like a gateway console trace."""
    d = trace.to_dict() if isinstance(trace, DecisionTrace) else trace
    weights = weights or ScoringWeights()
    name = {p.id: p.name for p in catalog.patterns}

    def nm(ids):
        return ", ".join(name.get(i, i) for i in ids)

    lines = [f"[Edge Gateway: {d['node']}]  epoch: {d['epoch']}", "-" * 60]
    ctx = d["context"]
    if ctx:
        lines += [
            f"-> Threat context: {ctx['threat']}  Severity = {ctx['severity']:.2f}  "
            f"Confidence = {ctx['confidence']:.2f}",
            "-> Monitor stage: gateway telemetry captured "
            f"(digest {d['telemetry_digest']})",
            f"   CPU headroom = {ctx['budgets']['cpu']:.2f}  Memory = {ctx['budgets']['mem']:.2f}  "
            f"Latency budget = {ctx['budgets']['lat']:.0f} ms  Energy = {ctx['budgets']['ene']:.0f} J",
            "-> Analyze stage: structured state constructed",
            f"   S_t = [threat = {ctx['threat']}, severity = {ctx['severity']:.2f}, "
            f"confidence = {ctx['confidence']:.2f}, SLA = {ctx['sla']}]",
            f"   evidence tokens = {{{', '.join(ctx['evidence'])}}}",
        ]
    msgs = {m["agent"]: m for m in d["messages"]}
    if "context" in msgs:
        lines += ["   [Context Agent] -> normalised context and validated schema",
                  f"      status: {msgs['context']['payload'].get('status', 'PASS')}"]
    if "reasoner" in msgs:
        lines += ["   [Reasoner Agent] -> candidate mitigation patterns",
                  f"      {{{nm(d['candidates'])}}}"]
    if "constraint" in msgs:
        rejected = [r["pattern_id"] for r in msgs["constraint"]["payload"].get("rejected", [])]
        rejected += [c for c in d["candidates"] if c not in d["feasible"] and c not in rejected]
        lines += ["   [Constraint Agent] -> capability and relevance filtering",
                  f"      rejected: {nm(rejected) or 'none'}",
                  f"      feasible set F_t = {{{nm(d['feasible'])}}}"]
    if d["feasible"] and ctx:
        s = StructuredContext.from_dict(ctx)
        lines.append("-> Deterministic portfolio optimisation")
        for k in (1, 2):
            for combo in combinations(sorted(d["feasible"]), k):
                ok = within_budget(combo, s.budgets, catalog) and not conflict_count(combo, catalog)
                sc = portfolio_score(combo, s, s.budgets, catalog, weights)
                lines.append(f"   Y = {{{nm(combo)}}}  score = {sc:.3f}  "
                             f"{'feasible' if ok else 'infeasible'}")
        lines.append(f"   Selected portfolio: Y_det = {{{nm(d['y_det']['members'])}}}  "
                     f"score = {d['y_det']['score']:.3f}")
        lines += ["-> Ordering module: precedence rules",
                  f"   [{' -> '.join(name.get(i, i) for i in d['order_det'])}]"]
    if "planner" in msgs:
        lines += ["   [Planner Agent] -> executable mitigation plan",
                  f"      {d['plan'].get('narrative', '')}"]
    if d["gate"]:
        cats = {i["category"] for i in d["gate"]["issues"]}
        checks = [("catalog membership", "catalog_membership"), ("set consistency", "set_mismatch"),
                  ("conflict check", "conflict"), ("resource feasibility", "resource_feasibility"),
                  ("execution order", "activation_order_mismatch")]
        lines.append("   [Security Gate] -> deterministic validation")
        lines += [f"      {label} = {'FAIL' if cat in cats else 'PASS'}" for label, cat in checks]
    if d["audit"]:
        lines += ["   [Auditor Agent] -> policy consistency",
                  f"      approved = {str(d['audit']['approved']).upper()}"]
    if d["failure"]:
        lines.append(f"-> Agent stage failure: {d['failure']['message']}")
    if d["executed"]:
        lines += ["-> Execute stage", f"   {' -> '.join(name.get(i, i) for i in d['executed_order'])}"]
    else:
        lines += ["-> Fail-safe baseline engaged",
                  f"   {nm(d['executed_portfolio']) or 'none (no baseline fits budgets)'}"]
    lines += ["-> Final system outcome",
              f"   decision latency = {d['latency']['total']:.1f} s  "
              f"energy overhead = {d['energy']:.1f} J  avg power = {d['power']:.3f} W"]
    return "\n".join(lines)

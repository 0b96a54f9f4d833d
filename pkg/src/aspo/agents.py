"""Multi-agent deliberation layer.

Five agents run strictly in sequence: context -> reasoner -> constraint ->
(deterministic core) -> planner -> auditor. Agents only propose; nothing in
this module mutates engine or gateway state. Every backend response is
schema-validated, and candidate/feasible lists are checked against the
closed-world catalogue before they are accepted.

Backends implement ``respond(agent, request) -> dict``. Three ship here:
:class:`MockBackend` (deterministic, seeded), :class:`FaultInjectionBackend`
(tampers with the mock's output for gate testing) and
:class:`RemoteBackend` (JSON over HTTP).
"""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Mapping, Sequence

import jsonschema
import numpy as np

from .catalog import Catalog, conflict_count
from .context import StructuredContext
from .optimizer import Portfolio, ScoringWeights, suitability

log = logging.getLogger(__name__)

AGENTS = ("context", "reasoner", "constraint", "planner", "auditor")


class AgentError(RuntimeError):
    """Base class for agent-stage failures; the engine falls back on any of these."""
    category = "agent_error"

    def __init__(self, agent: str, message: str):
        super().__init__(f"[{agent}] {message}")
        self.agent = agent


class SchemaViolation(AgentError):
    category = "schema_violation"


class ClosedWorldViolation(AgentError):
    category = "closed_world_violation"


class ContractViolation(AgentError):
    category = "contract_violation"


class BackendTimeout(AgentError):
    category = "timeout"


@dataclass(frozen=True)
class AgentMessage:
    agent: str
    epoch: int
    payload: dict
    latency: float = 0.0
    attempts: int = 1

    def to_dict(self) -> dict:
        return {"agent": self.agent, "epoch": self.epoch, "payload": self.payload,
                "latency": self.latency, "attempts": self.attempts}


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[str, ...]
    rationales: tuple[str, ...] = ()

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)


@dataclass(frozen=True)
class MitigationPlan:
    selected_patterns: tuple[str, ...]
    activation_order: tuple[str, ...]
    narrative: str = ""

    def __post_init__(self):
        object.__setattr__(self, "selected_patterns", tuple(self.selected_patterns))
        object.__setattr__(self, "activation_order", tuple(self.activation_order))

    def is_consistent(self) -> bool:
        """activation_order is a permutation of selected_patterns."""
        return sorted(self.activation_order) == sorted(self.selected_patterns)

    def to_dict(self) -> dict:
        return {"selected_patterns": list(self.selected_patterns),
                "activation_order": list(self.activation_order),
                "narrative": self.narrative}


@dataclass(frozen=True)
class AuditVerdict:
    approved: bool
    issues: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"approved": self.approved, "issues": list(self.issues)}


@lru_cache(maxsize=None)
def agent_schema(agent: str) -> dict:
    text = resources.files("aspo").joinpath(f"schemas/{agent}.json").read_text()
    return json.loads(text)


@lru_cache(maxsize=None)
def _validator(agent: str) -> jsonschema.protocols.Validator:
    schema = agent_schema(agent)
    cls = jsonschema.validators.validator_for(schema)
    return cls(schema)


def validate_payload(agent: str, payload: Any) -> None:
    if not isinstance(payload, dict):
        raise SchemaViolation(agent, f"payload must be an object, got {type(payload).__name__}")
    errors = sorted(_validator(agent).iter_errors(payload), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(map(str, e.path)) or "<root>"
        raise SchemaViolation(agent, f"{where}: {e.message}")


def catalog_summary(catalog: Catalog) -> list[dict]:
    return [
        {"pattern_id": p.id, "name": p.name, "covers": sorted(p.covered_threats),
         "requires": sorted(p.required_capabilities),
         "evidence": sorted(p.expected_evidence)}
        for p in catalog.patterns
    ]


# --- clocks -----------------------------------------------------------------

Clock = Callable[[str, Callable[[], dict]], "tuple[dict, float]"]


def wall_clock(agent: str, call: Callable[[], dict]) -> tuple[dict, float]:
    t0 = time.perf_counter()
    out = call()
    return out, time.perf_counter() - t0


# --- backends ---------------------------------------------------------------

class AgentBackend:
    """Interface: map an agent name and request document to a response document."""

    name = "abstract"

    def respond(self, agent: str, request: dict) -> dict:  # pragma: no cover
        raise NotImplementedError


class MockBackend(AgentBackend):
    """Deterministic stand-in for model-backed agents.

    The reasoner ranks threat-covering patterns by suitability plus a seeded
    uniform jitter and keeps the top K; every other agent passes its input
    through. Randomness is keyed on ``(seed, request["nonce"])`` only, so the
    same request always yields the same answer regardless of call order.
    """

    name = "mock"

    def __init__(self, catalog: Catalog, weights: ScoringWeights | None = None,
                 seed: int = 0, jitter: float = 0.05):
        self.catalog = catalog
        self.weights = weights or ScoringWeights()
        self.seed = int(seed)
        self.jitter = jitter

    def _rng(self, request: dict) -> np.random.Generator:
        return np.random.default_rng([self.seed, int(request.get("nonce", 0))])

    def respond(self, agent: str, request: dict) -> dict:
        return getattr(self, f"_{agent}")(request)

    def _context(self, request):
        return {"context": dict(request["context"]), "status": "PASS"}

    def _reasoner(self, request):
        s = StructuredContext.from_dict(request["context"])
        k = int(request["K"])
        noise = self._rng(request).uniform(-self.jitter, self.jitter, size=self.catalog.m)
        ranked = []
        for i, p in enumerate(self.catalog.patterns):
            if s.threat in p.covered_threats:
                ranked.append((-(suitability(p, s, self.weights) + noise[i]), p.id))
        ranked.sort()
        return {"candidates": [
            {"pattern_id": pid, "rationale": f"covers {s.threat}; jittered suitability {-neg:.3f}"}
            for neg, pid in ranked[:k]
        ]}

    def _constraint(self, request):
        caps = set(request["context"]["capabilities"])
        feasible, rejected = [], []
        for c in request["candidates"]:
            missing = sorted(set(self.catalog.get(c).required_capabilities) - caps) if c in self.catalog else []
            if missing:
                rejected.append({"pattern_id": c, "reason": "missing capability " + ", ".join(missing)})
            else:
                feasible.append({"pattern_id": c})
        return {"feasible": feasible, "rejected": rejected}

    def _planner(self, request):
        order = list(request["activation_order"])
        names = [self.catalog.get(p).name for p in order if p in self.catalog]
        narrative = ("activate " + " then ".join(names)) if names else "no mitigation selected"
        return {"selected_patterns": list(request["selected_patterns"]),
                "activation_order": order, "narrative": narrative}

    def _auditor(self, request):
        issues = list(request.get("gate_issues", []))
        return {"approved": not issues, "issues": issues,
                "note": "policy consistency verified" if not issues else "gate issues present"}


FAULT_PROFILES = (
    "order_swap", "set_tamper", "budget_blind", "out_of_catalogue",
    "auditor_rubberstamp", "reasoner_injection", "schema_garbage",
)


class FaultInjectionBackend(MockBackend):
    """Mock backend whose outputs are corrupted according to a fault profile.

    ``profile="mixed"`` picks one of the planner faults per request (or none)
    using the request nonce. ``rate`` is the per-request probability that the
    fault fires at all.
    """

    MIXED = ("order_swap", "set_tamper", "budget_blind", "out_of_catalogue")

    def __init__(self, catalog: Catalog, profile: str, weights: ScoringWeights | None = None,
                 seed: int = 0, rate: float = 1.0, jitter: float = 0.05):
        super().__init__(catalog, weights, seed, jitter)
        if profile != "mixed" and profile not in FAULT_PROFILES:
            raise ValueError(f"unknown fault profile {profile!r}")
        self.profile = profile
        self.rate = rate
        self.name = f"fault:{profile}"

    def _fault_for(self, request) -> str | None:
        rng = np.random.default_rng([self.seed, int(request.get("nonce", 0)), 7919])
        if rng.random() >= self.rate:
            return None
        if self.profile == "mixed":
            return self.MIXED[int(rng.integers(len(self.MIXED)))]
        return self.profile

    def respond(self, agent: str, request: dict) -> dict:
        out = super().respond(agent, request)
        fault = self._fault_for(request)
        if fault is None:
            return out
        if agent == "reasoner" and fault == "reasoner_injection":
            out["candidates"].append({"pattern_id": "P99", "rationale": "injected"})
        elif agent == "context" and fault == "schema_garbage":
            out = {"context": {"threat": request["context"]["threat"]}}
        elif agent == "auditor" and fault == "auditor_rubberstamp":
            out = {"approved": True, "issues": [], "note": "approved without review"}
        elif agent == "planner":
            out = self._tamper_plan(fault, out, request)
        return out

    def _tamper_plan(self, fault, plan, request):
        sel = list(plan["selected_patterns"])
        order = list(plan["activation_order"])
        if fault == "order_swap" and len(order) >= 2:
            order = order[::-1]
        elif fault == "set_tamper":
            extra = self._tamper_target(sel)
            if extra is not None:
                sel.append(extra)
                order.append(extra)
        elif fault == "out_of_catalogue":
            sel.append("P99")
            order.append("P99")
        elif fault == "budget_blind":
            s = StructuredContext.from_dict(request["context"])
            pool = sorted(
                (p for p in self.catalog.patterns
                 if s.threat in p.covered_threats and p.id not in sel),
                key=lambda p: (-suitability(p, s, self.weights), p.id))
            for p in pool:
                if len(sel) >= self.weights.portfolio_bound:
                    break
                if conflict_count(sel + [p.id], self.catalog) == 0:
                    sel.append(p.id)
                    order.append(p.id)
        return {**plan, "selected_patterns": sel, "activation_order": order}

    def _tamper_target(self, sel: list[str]) -> str | None:
        for pid in sel:
            for q in self.catalog.ids:
                if q not in sel and self.catalog.conflicts(pid, q):
                    return q
        rest = [q for q in self.catalog.ids if q not in sel]
        return rest[0] if rest else None


class RemoteBackend(AgentBackend):
    """JSON-over-HTTP backend.

    Sends ``{"model", "agent", "input"}`` with a bearer token read from
    ``token_env``. The reply may be the payload itself or a chat-completion
    style envelope whose first message content is the payload as JSON text.
    """

    name = "remote"

    def __init__(self, url: str, model: str = "", token_env: str = "ASPO_BACKEND_TOKEN",
                 timeout: float = 30.0, client=None):
        import httpx

        self.url = url
        self.model = model
        self.token_env = token_env
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)
        self._httpx = httpx

    def respond(self, agent: str, request: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {"model": self.model, "agent": agent, "input": request}
        try:
            resp = self._client.post(self.url, json=body, headers=headers, timeout=self.timeout)
        except self._httpx.TimeoutException as exc:
            raise BackendTimeout(agent, f"no response within {self.timeout}s") from exc
        except self._httpx.HTTPError as exc:
            raise AgentError(agent, f"transport error: {exc}") from exc
        if resp.status_code >= 400:
            raise AgentError(agent, f"HTTP {resp.status_code}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise SchemaViolation(agent, "response is not JSON") from exc
        return unwrap_completion(agent, data)


def unwrap_completion(agent: str, data: Any) -> Any:
    if isinstance(data, dict) and "choices" in data:
        try:
            content = data["choices"][0]["message"]["content"]
            return json.loads(content)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise SchemaViolation(agent, "malformed completion envelope") from exc
    return data


# --- agent stages -----------------------------------------------------------

def _call(agent: str, backend: AgentBackend, request: dict, clock: Clock,
          check: Callable[[dict], Any]) -> tuple[dict, Any, float, int]:
    """Call the backend, validate, retry once on schema/timeout failure."""
    elapsed = 0.0
    last: AgentError | None = None
    for attempt in (1, 2):
        try:
            payload, dt = clock(agent, lambda: backend.respond(agent, request))
        except BackendTimeout as exc:
            last = exc
            elapsed += getattr(exc, "elapsed", 0.0)
            continue
        elapsed += dt
        try:
            validate_payload(agent, payload)
            return payload, check(payload), elapsed, attempt
        except SchemaViolation as exc:
            last = exc
            log.warning("%s: schema-invalid output on attempt %d: %s", agent, attempt, exc)
    exc = last or AgentError(agent, "no response")
    exc.elapsed = elapsed  # type: ignore[attr-defined]
    raise exc


def run_context_agent(s: StructuredContext, catalog: Catalog, backend: AgentBackend, *,
                      epoch: int = 0, nonce: int = 0, clock: Clock = wall_clock
                      ) -> tuple[AgentMessage, StructuredContext]:
    request = {"agent": "context", "epoch": epoch, "nonce": nonce, "context": s.to_dict(),
               "taxonomy": sorted(catalog.threat_taxonomy), "sla_levels": list(catalog.sla_levels)}

    def check(payload):
        ctx = payload["context"]
        if ctx["threat"] not in catalog.threat_taxonomy:
            raise SchemaViolation("context", f"threat {ctx['threat']!r} outside taxonomy")
        if ctx["sla"] not in catalog.sla_levels:
            raise SchemaViolation("context", f"sla {ctx['sla']!r} outside declared levels")
        return StructuredContext.from_dict(ctx)

    payload, s_star, dt, n = _call("context", backend, request, clock, check)
    return AgentMessage("context", epoch, payload, dt, n), s_star


def _closed_world(agent: str, ids: Sequence[str], catalog: Catalog) -> None:
    bad = [i for i in ids if i not in catalog]
    if bad:
        raise ClosedWorldViolation(agent, f"pattern ids outside catalogue: {bad}")


def run_reasoner(s_star: StructuredContext, catalog: Catalog, weights: ScoringWeights,
                 backend: AgentBackend, *, epoch: int = 0, nonce: int = 0,
                 clock: Clock = wall_clock) -> tuple[AgentMessage, CandidateSet]:
    k = weights.candidate_bound
    request = {"agent": "reasoner", "epoch": epoch, "nonce": nonce,
               "context": s_star.to_dict(), "catalog": catalog_summary(catalog), "K": k}

    def check(payload):
        ids = [c["pattern_id"] for c in payload["candidates"]]
        _closed_world("reasoner", ids, catalog)
        if len(ids) > k:
            raise ContractViolation("reasoner", f"{len(ids)} candidates exceed K={k}")
        if len(set(ids)) != len(ids):
            raise ContractViolation("reasoner", "duplicate candidates")
        return CandidateSet(tuple(ids), tuple(c.get("rationale", "") for c in payload["candidates"]))

    payload, cands, dt, n = _call("reasoner", backend, request, clock, check)
    return AgentMessage("reasoner", epoch, payload, dt, n), cands


def capability_filter(candidates: Sequence[str], capabilities: frozenset[str],
                      catalog: Catalog) -> tuple[str, ...]:
    return tuple(p for p in candidates if catalog.get(p).required_capabilities <= capabilities)


def filter_feasible(C: CandidateSet, s_star: StructuredContext, catalog: Catalog,
                    backend: AgentBackend, *, trusted_capabilities: frozenset[str] | None = None,
                    epoch: int = 0, nonce: int = 0, clock: Clock = wall_clock
                    ) -> tuple[AgentMessage, tuple[str, ...]]:
    """Constraint agent followed by the mandatory deterministic capability filter.

    The agent may drop candidates but never add one. The capability check is
    re-applied afterwards against ``trusted_capabilities`` (defaults to the
    context's own set).
    """
    request = {"agent": "constraint", "epoch": epoch, "nonce": nonce,
               "context": s_star.to_dict(), "candidates": list(C.candidates)}

    def check(payload):
        ids = [c["pattern_id"] for c in payload["feasible"]]
        _closed_world("constraint", ids, catalog)
        added = [i for i in ids if i not in C.candidates]
        if added:
            raise ContractViolation("constraint", f"agent added patterns {added}")
        return ids

    payload, kept, dt, n = _call("constraint", backend, request, clock, check)
    caps = s_star.capabilities if trusted_capabilities is None else trusted_capabilities
    kept_set = set(kept)
    ordered = [p for p in C.candidates if p in kept_set]
    return AgentMessage("constraint", epoch, payload, dt, n), capability_filter(ordered, caps, catalog)


def run_planner(s_star: StructuredContext, Y_det: Portfolio | Sequence[str], order: Sequence[str],
                catalog: Catalog, backend: AgentBackend, *, feasible: Sequence[str] = (),
                epoch: int = 0, nonce: int = 0, clock: Clock = wall_clock
                ) -> tuple[AgentMessage, MitigationPlan]:
    members = list(Y_det.members if isinstance(Y_det, Portfolio) else Y_det)
    request = {"agent": "planner", "epoch": epoch, "nonce": nonce, "context": s_star.to_dict(),
               "selected_patterns": members, "activation_order": list(order),
               "feasible": list(feasible), "catalog": catalog_summary(catalog)}

    def check(payload):
        # Deviations from the deterministic selection are the gate's job.
        return MitigationPlan(payload["selected_patterns"], payload["activation_order"],
                              payload.get("narrative", ""))

    payload, plan, dt, n = _call("planner", backend, request, clock, check)
    return AgentMessage("planner", epoch, payload, dt, n), plan


def run_auditor(s_star: StructuredContext, plan: MitigationPlan, gate_issues: Sequence[str],
                backend: AgentBackend, *, epoch: int = 0, nonce: int = 0,
                clock: Clock = wall_clock) -> tuple[AgentMessage, AuditVerdict]:
    request = {"agent": "auditor", "epoch": epoch, "nonce": nonce, "context": s_star.to_dict(),
               "plan": plan.to_dict(), "gate_issues": list(gate_issues)}

    def check(payload):
        return AuditVerdict(bool(payload["approved"]), tuple(payload.get("issues", [])))

    payload, verdict, dt, n = _call("auditor", backend, request, clock, check)
    return AgentMessage("auditor", epoch, payload, dt, n), verdict


def make_backend(selector: str, catalog: Catalog, weights: ScoringWeights | None = None,
                 seed: int = 0, remote: Mapping[str, Any] | None = None) -> AgentBackend:
    """Build a backend from a selector string: ``mock``, ``remote``, ``fault:<profile>``."""
    if selector == "mock":
        return MockBackend(catalog, weights, seed)
    if selector.startswith("fault:"):
        profile, _, rate = selector[len("fault:"):].partition("@")
        return FaultInjectionBackend(catalog, profile, weights, seed, float(rate) if rate else 1.0)
    if selector == "remote":
        remote = dict(remote or {})
        if "url" not in remote:
            raise ValueError("remote backend needs a 'url' in the engine config")
        return RemoteBackend(**remote)
    raise ValueError(f"unknown backend selector {selector!r}")

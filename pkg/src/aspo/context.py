"""Monitor/Analyse: telemetry -> bounded structured context.

Everything here is a pure function of its inputs. The encoder never looks at
wall-clock time or global state, so identical telemetry always yields an
identical context.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

from .catalog import Catalog

# Table-I features, in evidence-emission order, with the token each one raises.
FEATURE_TOKENS: dict[str, str] = {
    "packet_rate": "traffic_burst",
    "byte_rate": "service_saturation",
    "connection_duration": "sustained_session",
    "tcp_flag_anomaly": "syn_flood_pattern",
    "dst_port_entropy": "port_sweep",
    "auth_failure_burst": "auth_failure_burst",
    "dns_anomaly": "dns_anomaly",
    "timeout_irregularity": "timeout_irregularity",
}
FLOW_FEATURES = tuple(FEATURE_TOKENS)
DOS_FAMILY = frozenset({"dos", "ddos"})

_UNIT_FIELDS = ("tcp_flag_anomaly", "dst_port_entropy", "dns_anomaly",
                "timeout_irregularity", "cpu_headroom", "mem_headroom", "label_confidence")
_NONNEG_FIELDS = ("packet_rate", "byte_rate", "connection_duration", "auth_failure_burst",
                  "latency_budget", "energy_budget", "load_proxy")


class ContextError(ValueError):
    pass


class PerturbationBoundError(ContextError):
    pass


def _clip(v: float, lo: float, hi: float = math.inf) -> float:
    if math.isnan(v):
        return lo
    return min(max(v, lo), hi)


@dataclass(frozen=True)
class TelemetryVector:
    """One telemetry window observed at the gateway.

    Bounded fields are clipped on construction; NaN is mapped to the lower
    bound so adversarial raw inputs cannot escape the declared ranges.
    """
    packet_rate: float = 0.0
    byte_rate: float = 0.0
    connection_duration: float = 0.0
    tcp_flag_anomaly: float = 0.0
    dst_port_entropy: float = 0.0
    auth_failure_burst: float = 0.0
    dns_anomaly: float = 0.0
    timeout_irregularity: float = 0.0
    cpu_headroom: float = 1.0
    mem_headroom: float = 1.0
    latency_budget: float = 100.0
    energy_budget: float = 100.0
    device_temp: float = 35.0
    load_proxy: float = 0.0
    threat_label: str = "benign"
    label_confidence: float = 1.0

    def __post_init__(self):
        for name in _UNIT_FIELDS:
            object.__setattr__(self, name, _clip(float(getattr(self, name)), 0.0, 1.0))
        for name in _NONNEG_FIELDS:
            # inf rates are clipped to a large finite ceiling
            object.__setattr__(self, name, _clip(float(getattr(self, name)), 0.0, 1e12))
        t = float(self.device_temp)
        object.__setattr__(self, "device_temp", 0.0 if math.isnan(t) else _clip(t, -273.0, 1e4))

    @classmethod
    def from_mapping(cls, row: Mapping[str, object]) -> "TelemetryVector":
        known = {f.name for f in fields(cls)}
        kw = {}
        for k, v in row.items():
            if k not in known or v is None or v == "":
                continue
            kw[k] = str(v) if k == "threat_label" else float(v)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BudgetVector:
    cpu: float
    mem: float
    lat: float
    ene: float

    def __post_init__(self):
        for k in ("cpu", "mem", "lat", "ene"):
            v = getattr(self, k)
            if not math.isfinite(v) or v < 0:
                raise ContextError(f"budget {k}={v!r} must be finite and >= 0")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cpu, self.mem, self.lat, self.ene)


@dataclass(frozen=True)
class StructuredContext:
    threat: str
    severity: float
    confidence: float
    budgets: BudgetVector
    sla: str
    evidence: frozenset[str]
    capabilities: frozenset[str]

    def __post_init__(self):
        if not (0.0 <= self.severity <= 1.0 and 0.0 <= self.confidence <= 1.0):
            raise ContextError("severity and confidence must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "threat": self.threat,
            "severity": self.severity,
            "confidence": self.confidence,
            "budgets": asdict(self.budgets),
            "sla": self.sla,
            "evidence": sorted(self.evidence),
            "capabilities": sorted(self.capabilities),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StructuredContext":
        return cls(
            threat=d["threat"],
            severity=float(d["severity"]),
            confidence=float(d["confidence"]),
            budgets=BudgetVector(**{k: float(v) for k, v in d["budgets"].items()}),
            sla=d["sla"],
            evidence=frozenset(d["evidence"]),
            capabilities=frozenset(d["capabilities"]),
        )

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class EncoderConfig:
    thresholds: Mapping[str, float] = field(default_factory=lambda: {
        "packet_rate": 1000.0,
        "byte_rate": 1.0e6,
        "connection_duration": 60.0,
        "tcp_flag_anomaly": 0.5,
        "dst_port_entropy": 0.6,
        "auth_failure_burst": 5.0,
        "dns_anomaly": 0.5,
        "timeout_irregularity": 0.5,
    })
    flood_packet_rate: float = 3600.0
    flood_byte_rate: float = 5.0e6
    evidence_cap: int = 8
    capabilities: frozenset[str] = frozenset({
        "acl_engine", "broker_tls", "fog_node", "pki",
        "policy_engine", "vlan_control", "zone_hub",
    })
    # headroom below these switches the SLA mode
    degraded_headroom: float = 0.25
    critical_headroom: float = 0.10

    def __post_init__(self):
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))
        object.__setattr__(self, "thresholds", dict(self.thresholds))
        if self.evidence_cap < 0:
            raise ContextError("evidence_cap must be >= 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "EncoderConfig":
        base = cls()
        kw = dict(d)
        if "thresholds" in kw:
            kw["thresholds"] = {**base.thresholds, **kw["thresholds"]}
        if "capabilities" in kw:
            kw["capabilities"] = frozenset(kw["capabilities"])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "EncoderConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["capabilities"] = sorted(self.capabilities)
        return d


def derive_evidence_tokens(x: TelemetryVector, config: EncoderConfig) -> frozenset[str]:
    """Tokens for every feature strictly above its threshold, capped."""
    tokens = []
    for feat, token in FEATURE_TOKENS.items():
        thr = config.thresholds.get(feat)
        if thr is not None and getattr(x, feat) > thr:
            tokens.append(token)
    return frozenset(tokens[: config.evidence_cap])


def severity_proxy(x: TelemetryVector, config: EncoderConfig) -> float:
    intensity = min(1.0, x.packet_rate / config.flood_packet_rate)
    if x.threat_label in DOS_FAMILY:
        second = x.tcp_flag_anomaly
    else:
        second = min(1.0, x.byte_rate / config.flood_byte_rate)
    return _clip(0.5 * intensity + 0.5 * second, 0.0, 1.0)


def sla_mode(x: TelemetryVector, config: EncoderConfig, levels: tuple[str, ...]) -> str:
    headroom = min(x.cpu_headroom, x.mem_headroom)
    if headroom < config.critical_headroom and "critical" in levels:
        return "critical"
    if headroom < config.degraded_headroom and "degraded" in levels:
        return "degraded"
    return "normal" if "normal" in levels else levels[0]


def encode_context(x: TelemetryVector, catalog: Catalog,
                   config: EncoderConfig | None = None) -> StructuredContext:
    config = config or EncoderConfig()
    if x.threat_label not in catalog.threat_taxonomy:
        raise ContextError(f"threat label {x.threat_label!r} not in taxonomy")
    return StructuredContext(
        threat=x.threat_label,
        severity=severity_proxy(x, config),
        confidence=x.label_confidence,
        budgets=BudgetVector(
            cpu=x.cpu_headroom,
            mem=x.mem_headroom,
            lat=x.latency_budget,
            ene=x.energy_budget,
        ),
        sla=sla_mode(x, config, catalog.sla_levels),
        evidence=derive_evidence_tokens(x, config),
        capabilities=frozenset(config.capabilities & catalog.capability_universe),
    )


PERTURBABLE = ("severity", "confidence", "cpu", "mem", "lat", "ene")


def perturb_context(s: StructuredContext, delta: Mapping[str, float], bound: float) -> StructuredContext:
    """Apply an additive perturbation with ``max |delta| <= bound``, then re-clip."""
    unknown = set(delta) - set(PERTURBABLE)
    if unknown:
        raise ContextError(f"cannot perturb fields {sorted(unknown)}")
    if bound < 0:
        raise ContextError("bound must be >= 0")
    norm = max((abs(v) for v in delta.values()), default=0.0)
    if not norm <= bound:
        raise PerturbationBoundError(f"|delta|_inf = {norm} exceeds bound {bound}")
    d = {k: float(delta.get(k, 0.0)) for k in PERTURBABLE}
    b = s.budgets
    return replace(
        s,
        severity=_clip(s.severity + d["severity"], 0.0, 1.0),
        confidence=_clip(s.confidence + d["confidence"], 0.0, 1.0),
        budgets=BudgetVector(
            cpu=max(0.0, b.cpu + d["cpu"]),
            mem=max(0.0, b.mem + d["mem"]),
            lat=max(0.0, b.lat + d["lat"]),
            ene=max(0.0, b.ene + d["ene"]),
        ),
    )

import math

import pytest
from hypothesis import given, settings, strategies as st

from aspo.context import (
    ContextError, EncoderConfig, PerturbationBoundError, TelemetryVector, derive_evidence_tokens,
    encode_context, perturb_context,
)

from conftest import APPENDIX_DOS


def test_appendix_context(catalog, appendix_x):
    s = encode_context(appendix_x, catalog)
    assert s.threat == "dos"
    assert round(s.severity, 2) == 0.81
    assert s.confidence == 0.93
    assert {"traffic_burst", "syn_flood_pattern"} <= s.evidence
    assert s.budgets.as_tuple() == (0.58, 0.69, 95.0, 64.0)
    assert s.sla == "normal"
    assert "stateful_firewall" not in s.capabilities


def test_zero_benign_telemetry(catalog):
    s = encode_context(TelemetryVector(), catalog)
    assert s.severity == 0 and s.evidence == frozenset()


def test_encoding_is_deterministic(catalog, appendix_x):
    again = TelemetryVector.from_mapping(dict(APPENDIX_DOS))
    assert encode_context(appendix_x, catalog).serialize() == encode_context(again, catalog).serialize()


def test_unknown_threat_label(catalog):
    with pytest.raises(ContextError):
        encode_context(TelemetryVector(threat_label="alien"), catalog)


def test_evidence_thresholds():
    cfg = EncoderConfig()
    assert "traffic_burst" in derive_evidence_tokens(TelemetryVector(packet_rate=1000.1), cfg)
    assert derive_evidence_tokens(TelemetryVector(packet_rate=1000.0), cfg) == frozenset()
    assert "syn_flood_pattern" in derive_evidence_tokens(TelemetryVector(tcp_flag_anomaly=0.71), cfg)
    assert derive_evidence_tokens(TelemetryVector(), cfg) == frozenset()


def test_evidence_cap():
    x = TelemetryVector(packet_rate=1e5, byte_rate=1e8, tcp_flag_anomaly=1, dst_port_entropy=1)
    assert len(derive_evidence_tokens(x, EncoderConfig(evidence_cap=2))) == 2


def test_severity_monotone_in_packet_rate(catalog):
    sev = [encode_context(TelemetryVector(packet_rate=r, threat_label="ddos"), catalog).severity
           for r in (0, 500, 1500, 3000, 6000)]
    assert sev == sorted(sev)


def test_perturb_identity_and_clip(catalog, appendix_x):
    s = encode_context(appendix_x, catalog)
    assert perturb_context(s, {}, 0.1) == s
    assert perturb_context(s, {k: 0.0 for k in ("severity", "cpu")}, 0.0) == s
    hi = perturb_context(s.__class__(**{**s.__dict__, "severity": 0.98}), {"severity": 0.05}, 0.05)
    assert hi.severity == 1.0


def test_perturb_bound_violation(catalog, appendix_x):
    s = encode_context(appendix_x, catalog)
    with pytest.raises(PerturbationBoundError):
        perturb_context(s, {"lat": 2.0}, 1.0)
    with pytest.raises(ContextError):
        perturb_context(s, {"threat": 1.0}, 1.0)


def test_encoder_config_file(tmp_path):
    p = tmp_path / "enc.json"
    p.write_text('{"thresholds": {"packet_rate": 10}, "evidence_cap": 3}')
    cfg = EncoderConfig.load(p)
    assert cfg.thresholds["packet_rate"] == 10 and cfg.thresholds["byte_rate"] == 1e6
    assert EncoderConfig.from_dict(cfg.to_dict()) == cfg


extreme = st.one_of(st.floats(allow_nan=True, allow_infinity=True), st.integers(-10 ** 12, 10 ** 12))


@settings(max_examples=300, deadline=None)
@given(st.fixed_dictionaries({f: extreme for f in (
    "packet_rate", "byte_rate", "connection_duration", "tcp_flag_anomaly", "dst_port_entropy",
    "auth_failure_burst", "dns_anomaly", "timeout_irregularity", "cpu_headroom", "mem_headroom",
    "latency_budget", "energy_budget", "device_temp", "load_proxy", "label_confidence")}),
    st.sampled_from(["dos", "ddos", "botnet", "portscan", "benign"]))
def test_contexts_stay_in_range_for_adversarial_inputs(catalog, raw, label):
    s = encode_context(TelemetryVector.from_mapping({**raw, "threat_label": label}), catalog)
    assert 0 <= s.severity <= 1 and 0 <= s.confidence <= 1
    assert all(math.isfinite(v) and v >= 0 for v in s.budgets.as_tuple())
    assert s.sla in catalog.sla_levels
    assert s.capabilities <= catalog.capability_universe

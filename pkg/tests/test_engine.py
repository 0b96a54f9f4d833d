import math
from collections import Counter

import numpy as np
import pytest

from aspo.agents import AGENTS, FaultInjectionBackend, MockBackend
from aspo.context import TelemetryVector
from aspo.engine import (
    EngineConfig, LatencyConfig, NodeConfig, PowerParams, avg_power, balanced_sample, dump_trace,
    energy, lognormal_params, read_traces, render_trace, run_epoch, run_replay, write_traces,
)
from aspo.flows import DatasetError, synthesize_flows
from aspo.optimizer import ScoringWeights

from conftest import APPENDIX_DOS

W = ScoringWeights()


def test_power_model():
    assert avg_power(0.6, 44.0) == pytest.approx(2.0 + 0.3 + 0.2)
    assert avg_power(0.0, 30.0) == 2.0  # below the thermal threshold
    assert avg_power(0.5, 40.0, PowerParams(p0=1.0)) == 1.25
    assert energy(2.5, 4.0) == 10.0


def test_lognormal_fit_reproduces_targets():
    mu, sigma = lognormal_params(4.233, 5.754)
    assert math.exp(mu + sigma ** 2 / 2) == pytest.approx(4.233)
    assert math.exp(mu + 1.2815515655446004 * sigma) == pytest.approx(5.754)
    with pytest.raises(ValueError):
        lognormal_params(1.0, 100.0)


def test_appendix_epoch(catalog, appendix_x):
    t = run_epoch(appendix_x, catalog, W, MockBackend(catalog))
    assert t.candidates and set(t.feasible) == {"P03", "P07", "P01"}
    assert t.y_det.members == ("P03", "P07")
    assert t.order_det == ("P03", "P07")
    assert t.gate.ok and t.audit.approved and t.executed and not t.failsafe
    assert t.executed_order == ("P03", "P07")
    assert [m.agent for m in t.messages] == list(AGENTS)


def test_energy_and_latency_identities(catalog, appendix_x):
    t = run_epoch(appendix_x, catalog, W, MockBackend(catalog), epoch=3, seed=5)
    assert t.latency == sum(t.agent_latency[a] for a in AGENTS) + t.t_net + t.t_det
    assert t.energy == t.power * t.latency
    assert t.power == avg_power(0.6, 44.0)


@pytest.mark.parametrize("profile,stage", [("reasoner_injection", "reasoner"), ("schema_garbage", "context")])
def test_agent_failure_falls_back(catalog, appendix_x, profile, stage):
    t = run_epoch(appendix_x, catalog, W, FaultInjectionBackend(catalog, profile))
    assert t.failsafe and not t.executed
    assert t.failure["stage"] == stage
    assert t.executed_portfolio == ("P01",)
    assert t.latency == sum(t.agent_latency.values()) + t.t_net + t.t_det


def test_rubberstamp_auditor_cannot_override_gate(catalog, appendix_x):
    class Both(FaultInjectionBackend):
        def respond(self, agent, request):
            if agent == "planner":
                out = MockBackend.respond(self, agent, request)
                return {**out, "activation_order": out["activation_order"][::-1]}
            return super().respond(agent, request)

    t = run_epoch(appendix_x, catalog, W, Both(catalog, "auditor_rubberstamp"))
    assert t.audit.approved and not t.gate.ok
    assert t.failsafe and not t.executed


def test_benign_window_goes_to_failsafe(catalog):
    t = run_epoch(TelemetryVector(), catalog, W, MockBackend(catalog))
    assert t.y_det.members == () and t.failsafe and t.executed_portfolio == ("P01",)


def test_unknown_label_is_recorded_not_raised(catalog):
    t = run_epoch(TelemetryVector(threat_label="alien"), catalog, W, MockBackend(catalog))
    assert t.failure["category"] == "context_error" and t.failsafe


def test_wallclock_mode(catalog, appendix_x):
    cfg = EngineConfig(latency=LatencyConfig(mode="wallclock"))
    t = run_epoch(appendix_x, catalog, W, MockBackend(catalog), config=cfg)
    assert t.t_net == 0.0 and 0 < t.latency < 5


def test_node_capabilities_drive_feasibility(catalog, appendix_x):
    caps = EngineConfig().encoder.capabilities | {"stateful_firewall"}
    t = run_epoch(appendix_x, catalog, W, MockBackend(catalog), node=NodeConfig("n", caps))
    assert "P08" in t.feasible


def test_epoch_is_deterministic(catalog, appendix_x):
    a = run_epoch(appendix_x, catalog, W, MockBackend(catalog, seed=9), seed=9, epoch=4)
    b = run_epoch(appendix_x, catalog, W, MockBackend(catalog, seed=9), seed=9, epoch=4)
    assert dump_trace(a) == dump_trace(b)


def test_balanced_sample_counts():
    rows = synthesize_flows(30, seed=2)
    picked = balanced_sample(rows, 12, ["dos", "botnet"], seed=1)
    assert Counter(r["threat_label"] for r in picked) == {"dos": 12, "botnet": 12}
    with pytest.raises(DatasetError):
        balanced_sample(rows, 31, ["dos"], seed=1)


def test_replay_layout_and_node_order_independence(catalog):
    rows = synthesize_flows(20, seed=4)
    backend = MockBackend(catalog, seed=4)
    a = run_replay(rows, 3, 10, catalog, W, backend, seed=4)
    b = run_replay(rows, 3, 10, catalog, W, backend, seed=4, node_order=[2, 0, 1])
    assert [dump_trace(t) for t in a] == [dump_trace(t) for t in b]
    assert len(a) == 30
    assert Counter(t.node for t in a) == {"node-01": 10, "node-02": 10, "node-03": 10}
    digests = [t.telemetry_digest for t in a]
    assert len(set(digests)) == len(digests)  # disjoint windows


def test_replay_rejects_short_dataset(catalog):
    with pytest.raises(DatasetError):
        run_replay(synthesize_flows(1, seed=0), 10, 10, catalog, W, MockBackend(catalog))
    with pytest.raises(ValueError):
        run_replay(synthesize_flows(1, seed=0), 0, 10, catalog, W, MockBackend(catalog))


def test_trace_file_round_trip(catalog, appendix_x, tmp_path):
    t = run_epoch(appendix_x, catalog, W, MockBackend(catalog))
    p = tmp_path / "t.jsonl"
    write_traces(p, [t, t])
    back = read_traces(p)
    assert len(back) == 2 and back[0] == t.to_dict()
    assert back[0]["schema_version"] == 1


def test_render_trace_sections(catalog, appendix_x):
    text = render_trace(run_epoch(appendix_x, catalog, W, MockBackend(catalog)), catalog)
    for needle in ("Severity = 0.81", "rejected: Outbound-Only Connection",
                   "catalog membership = PASS", "Security Segmentation -> Blacklist"):
        assert needle in text


def test_engine_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        EngineConfig.from_dict({"sede": 1})
    cfg = EngineConfig.from_dict({"weights": {"eta": 0.2}, "latency": {"mode": "wallclock"}, "seed": 3})
    assert cfg.weights.eta == 0.2 and cfg.latency.mode == "wallclock"


def test_default_node_capabilities():
    nodes = EngineConfig().node_configs(4)
    assert ["stateful_firewall" in n.capabilities for n in nodes] == [False, True, False, True]

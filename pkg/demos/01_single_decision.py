"""One decision epoch on a gateway under a SYN-heavy DoS burst.

Walks the loop stage by stage and prints the console-style trace at the end.
Run: python3 demos/01_single_decision.py
"""
from aspo import MockBackend, ScoringWeights, TelemetryVector, encode_context, load_catalog, run_epoch
from aspo.engine import render_trace

catalog = load_catalog()
weights = ScoringWeights()

# %% Monitor: one telemetry window plus node state
x = TelemetryVector(
    packet_rate=3250, byte_rate=2.4e6, connection_duration=12, tcp_flag_anomaly=0.71,
    dst_port_entropy=0.22, dns_anomaly=0.1, timeout_irregularity=0.1,
    cpu_headroom=0.58, mem_headroom=0.69, latency_budget=95, energy_budget=64,
    device_temp=44, load_proxy=0.6, threat_label="dos", label_confidence=0.93,
)

# %% Analyse: the deterministic encoder produces the structured context
s = encode_context(x, catalog)
print("context:", s.serialize())

# %% Plan/Execute: agents, exhaustive selection, gate, audit
trace = run_epoch(x, catalog, weights, MockBackend(catalog, weights, seed=0))
print()
print(render_trace(trace, catalog, weights))

# the per-pattern breakdown behind the chosen score
for pid, suit, cost in trace.y_det.per_pattern:
    print(f"{pid}: suitability {suit:.3f}  normalised cost {cost:.3f}")

"""Latency and energy accounting per decision.

Simulated agent latencies are log-normal, fitted to per-agent (mean, P90)
targets; power follows load and a thermal term above 40 C.
Run: python3 demos/07_energy_latency.py
"""
import numpy as np

from aspo import EngineConfig, MockBackend, ScoringWeights, load_catalog, run_replay
from aspo.agents import AGENTS
from aspo.engine import DEFAULT_AGENT_LATENCY, avg_power, lognormal_params
from aspo.flows import synthesize_flows
from aspo.stats import percentiles

for a in AGENTS:
    mu, sigma = lognormal_params(*DEFAULT_AGENT_LATENCY[a])
    print(f"{a:10s} target mean/P90 {DEFAULT_AGENT_LATENCY[a]}  ->  mu={mu:.3f} sigma={sigma:.3f}")

print("power at load 0.6:", [round(avg_power(0.6, t), 3) for t in (35, 40, 44, 47)])

catalog = load_catalog()
w = ScoringWeights()
traces = run_replay(synthesize_flows(200, seed=2), 10, 100, catalog, w, MockBackend(catalog, w, 2),
                    seed=2, config=EngineConfig(seed=2))
lat = np.array([t.latency for t in traces])
ene = np.array([t.energy for t in traces])
print("latency P50/P90/P99 (s):", [round(v, 2) for v in percentiles(lat)])
print("energy  P50/P90/P99 (J):", [round(v, 2) for v in percentiles(ene)])
print("mean power (W):", round(float(np.mean([t.power for t in traces])), 3))
for a in AGENTS:
    xs = [t.agent_latency[a] for t in traces]
    print(f"{a:10s} mean {np.mean(xs):.3f}  P90 {percentiles(xs, [90])[0]:.3f}")

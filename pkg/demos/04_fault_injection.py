"""Corrupt planner outputs on purpose and watch the gate catch every one.

Each fault profile tampers with the plan in a different way; no tampered
plan is ever executed, and the fail-safe baseline takes over instead.
Run: python3 demos/04_fault_injection.py
"""
from collections import Counter

from aspo import EngineConfig, FaultInjectionBackend, ScoringWeights, load_catalog, run_replay
from aspo.flows import synthesize_flows
from aspo.gate import CATEGORIES

catalog = load_catalog()
w = ScoringWeights()
rows = synthesize_flows(20, seed=3)

print(f"{'profile':18s}" + "".join(f"{c[:14]:>16s}" for c in CATEGORIES) + f"{'executed':>10s}")
for profile in ("order_swap", "set_tamper", "budget_blind", "out_of_catalogue", "mixed"):
    backend = FaultInjectionBackend(catalog, profile, w, seed=3)
    traces = run_replay(rows, 5, 20, catalog, w, backend, seed=3, config=EngineConfig(seed=3))
    counts = Counter(c for t in traces if t.gate for c in set(t.gate.categories))
    executed = sum(t.executed for t in traces)
    print(f"{profile:18s}" + "".join(f"{counts[c]:16d}" for c in CATEGORIES) + f"{executed:10d}")

# epochs that did execute under a fault profile are those where the fault was a no-op,
# e.g. an order swap on a single-pattern portfolio

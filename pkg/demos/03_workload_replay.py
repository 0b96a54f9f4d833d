"""Replay 500 and 1000 balanced decisions across ten simulated gateways.

Prints the approval, failure, per-threat, latency and efficiency tables for
each workload, then the cross-workload comparison block.
Run: python3 demos/03_workload_replay.py
"""
from aspo import EngineConfig, MockBackend, ScoringWeights, load_catalog, run_replay
from aspo.flows import synthesize_flows
from aspo.stats import compare_runs, render_comparison, render_summary, summarize_run

catalog = load_catalog()
w = ScoringWeights()
seed = 1

logs = {}
for total, (nodes, epochs) in {500: (10, 50), 1000: (10, 100)}.items():
    rows = synthesize_flows(total // 5, seed=seed)
    traces = run_replay(rows, nodes, epochs, catalog, w, MockBackend(catalog, w, seed), seed=seed,
                        config=EngineConfig(seed=seed))
    logs[total] = [t.to_dict() for t in traces]
    print(render_summary(summarize_run(logs[total], catalog.ids), f"{total} runs"))
    print()

print(render_comparison(compare_runs(logs[500], logs[1000], catalog.ids), ("500 runs", "1000 runs")))

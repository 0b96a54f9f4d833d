"""How the constrained argmax trades suitability, cost, synergy and conflicts.

Run: python3 demos/02_portfolio_selection.py
"""
from itertools import combinations

from aspo import ScoringWeights, TelemetryVector, activation_order, encode_context, load_catalog
from aspo.catalog import conflict_count
from aspo.optimizer import portfolio_score, select_portfolio, within_budget

catalog = load_catalog()
w = ScoringWeights()
x = TelemetryVector(packet_rate=5200, byte_rate=6e6, tcp_flag_anomaly=0.6, cpu_headroom=0.9,
                    mem_headroom=0.9, latency_budget=150, energy_budget=120, threat_label="ddos",
                    label_confidence=0.88)
s = encode_context(x, catalog)
F = [p.id for p in catalog.patterns
     if s.threat in p.covered_threats and p.required_capabilities <= s.capabilities]
print("feasible candidates:", F)

# %% every subset the optimiser looks at, best first
rows = []
for k in range(1, w.portfolio_bound + 1):
    for Y in combinations(F, k):
        rows.append((portfolio_score(Y, s, s.budgets, catalog, w), Y,
                     conflict_count(Y, catalog), within_budget(Y, s.budgets, catalog)))
for score, Y, n_conf, fits in sorted(rows, reverse=True)[:10]:
    flag = "ok" if fits and not n_conf else ("conflict" if n_conf else "over budget")
    print(f"{score:10.3f}  {'+'.join(Y):20s} {flag}")

# %% the chosen portfolio and its activation order
y = select_portfolio(F, s, s.budgets, catalog, w)
print("selected:", y.members, f"score={y.score:.3f}", "order:", activation_order(y.members, catalog))

# %% shrinking the latency budget pushes the optimiser to smaller portfolios
for lat in (150, 90, 60, 40, 20):
    tight = x.__class__(**{**x.to_dict(), "latency_budget": lat})
    st = encode_context(tight, catalog)
    print(f"latency budget {lat:3d} ms ->", select_portfolio(F, st, st.budgets, catalog, w).members)

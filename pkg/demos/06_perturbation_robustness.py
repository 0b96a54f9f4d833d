"""Bounded context perturbations: when the argmax moves and when it cannot.

Run: python3 demos/06_perturbation_robustness.py
"""
import numpy as np

from aspo import ScoringWeights, TelemetryVector, encode_context, load_catalog, perturb_context
from aspo.catalog import conflict_count
from aspo.optimizer import select_portfolio, within_budget

catalog = load_catalog()
w = ScoringWeights()
x = TelemetryVector(packet_rate=3250, byte_rate=2.4e6, tcp_flag_anomaly=0.71, cpu_headroom=0.58,
                    mem_headroom=0.69, latency_budget=95, energy_budget=64, threat_label="dos",
                    label_confidence=0.93)
s = encode_context(x, catalog)
F = ["P01", "P03", "P07"]
base = select_portfolio(F, s, s.budgets, catalog, w).members
print("unperturbed:", base)

rng = np.random.default_rng(6)
for bound in (0.01, 0.1, 1.0, 10.0, 40.0):
    moved, unsafe = 0, 0
    for _ in range(500):
        delta = {k: float(rng.uniform(-bound, bound)) for k in ("severity", "confidence", "cpu", "mem", "lat", "ene")}
        s2 = perturb_context(s, delta, bound)
        y = select_portfolio(F, s2, s2.budgets, catalog, w).members
        moved += y != base
        unsafe += conflict_count(y, catalog) > 0 or not within_budget(y, s2.budgets, catalog)
    print(f"|delta| <= {bound:5}: argmax changed in {moved:3d}/500, unsafe outputs {unsafe}")
# large perturbations of the budgets can change the choice, but never make it unsafe
